#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use copilot_core::agents::{CompletionBackend, ScriptedBackend};
use copilot_core::engine::{Copilot, StepEvent};
use copilot_core::fixtures;
use copilot_core::graph::{
    InputBinding, MetaProgramGraph, RenderKind, SemanticType, ToolKind, ToolSpec, VariableSpec,
};
use copilot_core::registry::Registry;
use copilot_core::tools::builtin::{MockAdapter, MOCK_TOOLS};
use copilot_core::tools::{AdapterKey, MockServices, ToolAdapter, ToolCall, ToolRuntime};
use proptest::prelude::*;

/// The authored plan of each demo task: step kinds and tool names, in order.
pub const PLANS: [(&str, &[&str]); 5] = [
    ("A", &["format_input", "url_gen", "open_page"]),
    (
        "B",
        &["format_input", "adma_search", "adma_metadata", "show_table"],
    ),
    (
        "C",
        &["format_input", "adma_search", "url_gen", "open_page"],
    ),
    (
        "D",
        &[
            "format_input",
            "path_gen",
            "adma_auth",
            "adma_download",
            "download_file",
        ],
    ),
    (
        "E",
        &[
            "format_input",
            "gdrive_auth",
            "gdrive_download",
            "adma_upload",
            "open_page",
        ],
    ),
];

pub fn task(label: &str) -> String {
    fixtures::demo_tasks()
        .into_iter()
        .find(|t| t.label == label)
        .unwrap_or_else(|| panic!("no task {label}"))
        .instruction
}

pub fn demo_credentials() -> BTreeMap<String, String> {
    fixtures::parse_credentials(fixtures::CREDENTIALS_JSON).expect("embedded credentials parse")
}

/// How a step shows up in a plan: the tool for tool and output steps,
/// otherwise the step kind.
pub fn step_label(e: &StepEvent) -> String {
    match &e.tool {
        Some(t) => t.clone(),
        None => serde_json::to_value(e.kind)
            .unwrap()
            .as_str()
            .unwrap()
            .to_string(),
    }
}

/// One adapter invocation seen by [`Spy`].
#[derive(Debug, Clone, PartialEq)]
pub struct Invocation {
    pub tool: String,
    pub protected_service: Option<String>,
    pub had_credential: bool,
    pub required_params_present: bool,
}

/// Wraps every mock adapter and records each call.
#[derive(Default, Clone)]
pub struct Spy {
    pub calls: Arc<Mutex<Vec<Invocation>>>,
}

impl Spy {
    pub fn take(&self) -> Vec<Invocation> {
        std::mem::take(&mut *self.calls.lock().unwrap())
    }
}

struct SpyAdapter {
    inner: Arc<dyn ToolAdapter>,
    calls: Arc<Mutex<Vec<Invocation>>>,
}

impl ToolAdapter for SpyAdapter {
    fn execute(
        &self,
        call: &ToolCall,
    ) -> Result<BTreeMap<String, copilot_core::graph::Value>, copilot_core::tools::ToolError> {
        self.calls.lock().unwrap().push(Invocation {
            tool: call.spec.id.clone(),
            protected_service: call.spec.protected_service.clone(),
            had_credential: call.credential.is_some(),
            required_params_present: call
                .spec
                .inputs
                .iter()
                .filter(|i| i.required)
                .all(|i| call.args.contains_key(&i.param)),
        });
        self.inner.execute(call)
    }
}

/// A runtime whose every adapter (mock tools and auth gates) reports to
/// the returned spy.
pub fn spied_runtime(services: Arc<MockServices>) -> (ToolRuntime, Spy) {
    let spy = Spy::default();
    let rt = ToolRuntime::default();
    let mock: Arc<dyn ToolAdapter> = Arc::new(MockAdapter::new(services));
    for id in MOCK_TOOLS {
        rt.register_adapter(
            AdapterKey::Tool(id.into()),
            Arc::new(SpyAdapter {
                inner: mock.clone(),
                calls: spy.calls.clone(),
            }),
        )
        .unwrap();
    }
    rt.register_adapter(
        AdapterKey::Kind(ToolKind::AuthGate),
        Arc::new(SpyAdapter {
            inner: Arc::new(copilot_core::tools::builtin::AuthGateAdapter),
            calls: spy.calls.clone(),
        }),
    )
    .unwrap();
    (rt, spy)
}

/// Fixture directory plus the pieces a copilot is built from.
pub struct Env {
    pub dir: tempfile::TempDir,
    pub services: Arc<MockServices>,
    pub registry: Arc<Registry>,
    pub runtime: Arc<ToolRuntime>,
    pub backend: Arc<dyn CompletionBackend>,
    pub spy: Spy,
}

impl Env {
    pub fn new() -> Env {
        let dir = tempfile::tempdir().unwrap();
        fixtures::init(dir.path()).unwrap();
        let services = Arc::new(MockServices::load(dir.path()).unwrap());
        let registry = Arc::new(Registry::open(&dir.path().join(fixtures::REGISTRY_DIR)).unwrap());
        let (runtime, spy) = spied_runtime(services.clone());
        let backend = Arc::new(ScriptedBackend::from_json(fixtures::SCRIPT_JSON).unwrap());
        Env {
            dir,
            services,
            registry,
            runtime: Arc::new(runtime),
            backend,
            spy,
        }
    }

    pub fn copilot(&self) -> Copilot {
        Copilot::new(
            self.registry.clone(),
            self.runtime.clone(),
            self.backend.clone(),
        )
    }

    pub fn copilot_with(&self, backend: Arc<dyn CompletionBackend>) -> Copilot {
        Copilot::new(self.registry.clone(), self.runtime.clone(), backend)
    }
}

// Random valid graphs.

fn arb_type() -> impl Strategy<Value = SemanticType> {
    proptest::sample::select(SemanticType::ALL.to_vec())
}

fn arb_text() -> impl Strategy<Value = String> {
    // Unicode, quotes and escapes exercise the codec.
    proptest::string::string_regex("[ -~\u{e9}\u{4e2d}\u{1f33e}\"\\\\\n]{0,12}").unwrap()
}

#[derive(Debug, Clone)]
struct ToolSketch {
    kind: ToolKind,
    name: String,
    description: String,
    inputs: Vec<(usize, bool)>,
    outputs: Vec<usize>,
    protected: Option<usize>,
    render: Option<RenderKind>,
}

fn arb_tool(n_vars: usize) -> impl Strategy<Value = ToolSketch> {
    let kinds = vec![
        ToolKind::ExternalApi,
        ToolKind::Transform,
        ToolKind::AuthGate,
        ToolKind::UiOutput,
        ToolKind::ResponseOutput,
    ];
    let renders = vec![
        RenderKind::Text,
        RenderKind::Table,
        RenderKind::PlotSpec,
        RenderKind::DownloadButton,
        RenderKind::PageView,
        RenderKind::MapView,
        RenderKind::AuthRequest,
    ];
    (
        proptest::sample::select(kinds),
        arb_text(),
        arb_text(),
        proptest::collection::vec((0..n_vars, any::<bool>()), 0..4),
        proptest::collection::vec(0..n_vars, 0..3),
        proptest::option::of(0..3usize),
        proptest::option::of(proptest::sample::select(renders)),
    )
        .prop_map(
            |(kind, name, description, inputs, outputs, protected, render)| ToolSketch {
                kind,
                name,
                description,
                inputs,
                outputs,
                protected,
                render,
            },
        )
}

const SERVICES: [&str; 3] = ["google", "adma", "john_deere"];

/// Graphs that pass validation: one entry node, known variables, sinks
/// without outputs, render kinds only on sinks.
pub fn arb_graph() -> impl Strategy<Value = MetaProgramGraph> {
    (1usize..10)
        .prop_flat_map(|n| {
            (
                proptest::collection::vec((arb_type(), arb_text(), arb_text()), n),
                proptest::collection::vec(arb_tool(n), 0..8),
                proptest::collection::vec(0..n, 0..4),
            )
        })
        .prop_map(|(vars, tools, entry_outputs)| {
            let variables: Vec<VariableSpec> = vars
                .iter()
                .enumerate()
                .map(|(i, (ty, name, desc))| VariableSpec::new(&format!("v{i}"), name, *ty, desc))
                .collect();
            let mut specs = vec![ToolSpec {
                outputs: dedup(entry_outputs.iter().map(|i| format!("v{i}"))),
                ..ToolSpec::new("user_input", "User input", ToolKind::UserInput, "")
            }];
            for (t, sketch) in tools.into_iter().enumerate() {
                let sink = sketch.kind.is_sink();
                let mut spec = ToolSpec::new(
                    &format!("t{t}"),
                    &sketch.name,
                    sketch.kind,
                    &sketch.description,
                );
                spec.inputs = sketch
                    .inputs
                    .iter()
                    .enumerate()
                    .map(|(p, (v, required))| InputBinding {
                        param: format!("p{p}"),
                        var: format!("v{v}"),
                        required: *required,
                    })
                    .collect();
                if !sink {
                    spec.outputs = dedup(sketch.outputs.iter().map(|i| format!("v{i}")));
                }
                spec.protected_service = sketch.protected.map(|s| SERVICES[s].to_string());
                spec.render = if sink { sketch.render } else { None };
                if spec.kind == ToolKind::UiOutput && spec.inputs.is_empty() {
                    spec.render = Some(RenderKind::AuthRequest);
                }
                specs.push(spec);
            }
            MetaProgramGraph::new(variables, specs)
        })
}

fn dedup(ids: impl Iterator<Item = String>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for id in ids {
        if !out.contains(&id) {
            out.push(id);
        }
    }
    out
}
