//! The demo fixture bundle, scripted agent responses and registry, embedded
//! so `fixtures init` can materialise them anywhere.

use std::collections::BTreeMap;
use std::io;
use std::path::Path;
use std::sync::Arc;

use crate::agents::{BackendError, ScriptedBackend};
use crate::engine::Copilot;
use crate::registry::{Registry, RegistryEntry, RegistryError};
use crate::tools::{builtin, MockError, MockServices, ToolRuntime};

macro_rules! bundle {
    ($($rel:literal),* $(,)?) => {
        &[$(($rel, include_str!(concat!("../fixtures/bundle/", $rel)))),*]
    };
}

/// Mock service files, relative to the bundle root.
pub const BUNDLE: &[(&str, &str)] = bundle![
    "adma/1/readme.txt",
    "adma/Realm5/2024-05-01.csv",
    "adma/Realm5/2024-05-02.csv",
    "adma/scripts/calculate_ndvi.py",
    "adma/scripts/calculate_ndvi.py.meta.json",
    "adma/soil/soil_moisture_2024.csv",
    "adma/soil/soil_moisture_2024.csv.meta.json",
    "drive/adma_test/test.txt",
    "drive/reports/yield_2023.csv",
    "fields/1863N.json",
    "realm5/2024-05-01.csv",
    "realm5/2024-05-02.csv",
];

pub const SCRIPT_JSON: &str = include_str!("../fixtures/script.json");
pub const TASKS_TSV: &str = include_str!("../fixtures/tasks.tsv");
pub const CREDENTIALS_JSON: &str = include_str!("../fixtures/credentials.json");
pub const DRIVE_TEST_TXT: &str = include_str!("../fixtures/bundle/drive/adma_test/test.txt");
pub const REALM5_2024_05_01: &str = include_str!("../fixtures/bundle/realm5/2024-05-01.csv");

pub const SCRIPT_FILE: &str = "script.json";
pub const TASKS_FILE: &str = "tasks.tsv";
pub const CREDENTIALS_FILE: &str = "credentials.json";
pub const REGISTRY_DIR: &str = "registry";

/// One benchmark task: a short label and its instruction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Task {
    pub label: String,
    pub instruction: String,
}

/// Parses `label<TAB>instruction` lines; blank lines and `#` comments are
/// skipped.
pub fn parse_tasks(text: &str) -> Result<Vec<Task>, String> {
    let mut tasks = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim_end();
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (label, instruction) = line
            .split_once('\t')
            .ok_or_else(|| format!("line {}: expected label<TAB>instruction", n + 1))?;
        tasks.push(Task {
            label: label.trim().to_string(),
            instruction: instruction.trim().to_string(),
        });
    }
    Ok(tasks)
}

pub fn demo_tasks() -> Vec<Task> {
    parse_tasks(TASKS_TSV).expect("embedded task list parses")
}

/// Service → token pairs used to pre-authorise non-interactive runs.
pub fn parse_credentials(text: &str) -> Result<BTreeMap<String, String>, String> {
    serde_json::from_str(text).map_err(|e| e.to_string())
}

/// Writes the mock service files under `root`.
pub fn write_bundle(root: &Path) -> io::Result<()> {
    for (rel, content) in BUNDLE {
        let path = root.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(path, content)?;
    }
    Ok(())
}

/// A registry holding the built-in catalog.
pub fn builtin_registry() -> Registry {
    let r = Registry::in_memory();
    populate(&r).expect("built-in catalog has unique ids");
    r
}

fn populate(registry: &Registry) -> Result<(), RegistryError> {
    for e in builtin::catalog() {
        registry.register(RegistryEntry::Tool(e))?;
    }
    Ok(())
}

#[derive(Debug, thiserror::Error)]
pub enum InitError {
    #[error("{0}")]
    Io(#[from] io::Error),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Mock(#[from] MockError),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// Materialises everything a demo run needs: the service bundle, the
/// registry, the agent script, the benchmark tasks and demo credentials.
pub fn init(root: &Path) -> Result<(), InitError> {
    write_bundle(root)?;
    std::fs::write(root.join(SCRIPT_FILE), SCRIPT_JSON)?;
    std::fs::write(root.join(TASKS_FILE), TASKS_TSV)?;
    std::fs::write(root.join(CREDENTIALS_FILE), CREDENTIALS_JSON)?;
    let registry_dir = root.join(REGISTRY_DIR);
    let registry = Registry::open(&registry_dir)?;
    if registry.is_empty() {
        populate(&registry)?;
    }
    Ok(())
}

/// A copilot wired to the mock services, registry and script found under
/// an initialised fixtures directory.
pub fn demo_copilot(root: &Path) -> Result<(Copilot, Arc<MockServices>), InitError> {
    let services = Arc::new(MockServices::load(root)?);
    let registry = Arc::new(Registry::open(&root.join(REGISTRY_DIR))?);
    let runtime = Arc::new(ToolRuntime::with_mock_services(services.clone()));
    let backend = Arc::new(ScriptedBackend::load(&root.join(SCRIPT_FILE))?);
    Ok((Copilot::new(registry, runtime, backend), services))
}
