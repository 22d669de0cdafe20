use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::agents::RenderedOutput;

pub const DEFAULT_MAX_STEPS: u32 = 32;
pub const DEFAULT_CONTROLLER_ATTEMPTS: u32 = 3;
pub const DEFAULT_RETRIEVAL_K: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    /// Tool executions allowed per instruction, across resumptions.
    pub max_steps: u32,
    /// Controller calls per decision before giving up.
    pub controller_retries: u32,
    #[serde(with = "millis")]
    pub tool_timeout: Duration,
    /// Non-mandatory registry entries retrieved per instruction.
    pub retrieval_k: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            max_steps: DEFAULT_MAX_STEPS,
            controller_retries: DEFAULT_CONTROLLER_ATTEMPTS,
            tool_timeout: crate::tools::DEFAULT_TOOL_TIMEOUT,
            retrieval_k: DEFAULT_RETRIEVAL_K,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |reason: &str| {
            Err(EngineError::ConfigInvalid {
                reason: reason.to_string(),
            })
        };
        if self.max_steps == 0 {
            return bad("max_steps must be at least 1");
        }
        if self.controller_retries == 0 {
            return bad("controller_retries must be at least 1");
        }
        if self.tool_timeout.is_zero() {
            return bad("tool_timeout must be positive");
        }
        Ok(())
    }
}

mod millis {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        u64::deserialize(d).map(Duration::from_millis)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[serde(tag = "code", rename_all = "snake_case")]
pub enum EngineError {
    #[error("invalid config: {reason}")]
    ConfigInvalid { reason: String },
    #[error("unknown session {id:?}")]
    UnknownSession { id: String },
    #[error("wrong phase: session is {found}")]
    WrongPhase { found: String },
    #[error("unknown variable {variable:?}")]
    UnknownVariable { variable: String },
    #[error("empty token")]
    EmptyToken,
    #[error("invalid value for {variable:?}: {reason}")]
    InvalidValue { variable: String, reason: String },
    #[error("step budget of {max_steps} tool executions exceeded")]
    BudgetExceeded { max_steps: u32 },
    #[error("controller decision unparseable after {attempts} attempts: {detail}")]
    DecisionUnparseable { attempts: u32, detail: String },
    #[error("backend unreachable: {detail}")]
    BackendUnreachable { detail: String },
    #[error("tool {tool:?} failed: {detail}")]
    ToolFailure { tool: String, detail: String },
    #[error("cannot build a graph: {detail}")]
    GraphBuild { detail: String },
    #[error("cannot render output: {detail}")]
    OutputFailed { detail: String },
}

/// Where a session is in its turn.
///
/// ```text
/// idle ─▶ running ─▶ awaiting_clarification ─▶ running
///                 ├▶ awaiting_credentials   ─▶ running
///                 ├▶ done   ─▶ running (next instruction)
///                 └▶ failed ─▶ running (next instruction)
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "phase", rename_all = "snake_case")]
pub enum Phase {
    Idle,
    Running,
    AwaitingClarification { variable: String, prompt: String },
    AwaitingCredentials { service: String },
    Done { output: RenderedOutput },
    Failed { error: EngineError },
}

impl Phase {
    pub fn name(&self) -> &'static str {
        match self {
            Phase::Idle => "idle",
            Phase::Running => "running",
            Phase::AwaitingClarification { .. } => "awaiting_clarification",
            Phase::AwaitingCredentials { .. } => "awaiting_credentials",
            Phase::Done { .. } => "done",
            Phase::Failed { .. } => "failed",
        }
    }

    pub fn is_terminal(&self) -> bool {
        !matches!(self, Phase::Idle | Phase::Running)
    }

    pub fn can_transition_to(&self, next: &Phase) -> bool {
        match (self, next) {
            (Phase::Running, Phase::Running) => false,
            (Phase::Running, _) => !matches!(next, Phase::Idle),
            (_, Phase::Running) => true,
            _ => false,
        }
    }
}
