//! Shared setup for the criterion benches.

use std::collections::BTreeMap;
use std::sync::Arc;

use copilot_core::engine::Copilot;
use copilot_core::fixtures::{self, Task};
use copilot_core::tools::MockServices;

/// A copilot over a freshly initialised fixture directory, which lives as
/// long as this value.
pub struct Fixture {
    pub copilot: Copilot,
    pub services: Arc<MockServices>,
    pub credentials: BTreeMap<String, String>,
    pub tasks: Vec<Task>,
    _dir: tempfile::TempDir,
}

impl Fixture {
    pub fn new() -> std::io::Result<Fixture> {
        let dir = tempfile::tempdir()?;
        fixtures::init(dir.path()).map_err(std::io::Error::other)?;
        let (copilot, services) =
            fixtures::demo_copilot(dir.path()).map_err(std::io::Error::other)?;
        Ok(Fixture {
            copilot,
            services,
            credentials: fixtures::parse_credentials(fixtures::CREDENTIALS_JSON)
                .map_err(std::io::Error::other)?,
            tasks: fixtures::demo_tasks(),
            _dir: dir,
        })
    }

    /// One pre-authorised session running `task` to its end; returns the
    /// number of recorded steps.
    pub fn run(&self, task: &Task) -> usize {
        self.services.reset();
        let id = self
            .copilot
            .create_session_with_credentials(None, &self.credentials)
            .expect("default config is valid");
        self.copilot
            .submit_instruction(&id, &task.instruction)
            .expect("fresh session accepts an instruction");
        self.copilot
            .get_trace(&id)
            .map(|t| t.len())
            .unwrap_or_default()
    }
}
