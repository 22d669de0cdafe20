use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::agents::RenderedOutput;
use crate::graph::{GraphFile, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    FormatInput,
    Tool,
    AskUser,
    Clarification,
    AuthRequest,
    Credentials,
    Output,
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepStatus {
    Ok,
    Failed,
    Awaiting,
}

impl StepStatus {
    fn as_str(self) -> &'static str {
        match self {
            StepStatus::Ok => "ok",
            StepStatus::Failed => "failed",
            StepStatus::Awaiting => "awaiting",
        }
    }
}

/// One recorded step. Arguments and outputs are snapshots of store values;
/// credential tokens never appear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepEvent {
    pub seq: u64,
    pub turn: u32,
    pub kind: StepKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool: Option<String>,
    /// Variable asked for or supplied by the user.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variable: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub arguments: BTreeMap<String, Value>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub outputs: BTreeMap<String, Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rendered: Option<RenderedOutput>,
    /// Instruction text, question, service name or error message.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
    pub status: StepStatus,
    /// Microseconds since the Unix epoch.
    pub started_us: u64,
    pub ended_us: u64,
    /// Time spent inside the tool adapter, for tool steps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_us: Option<u64>,
}

impl StepEvent {
    pub fn new(kind: StepKind, status: StepStatus) -> Self {
        StepEvent {
            seq: 0,
            turn: 0,
            kind,
            tool: None,
            variable: None,
            arguments: BTreeMap::new(),
            outputs: BTreeMap::new(),
            rendered: None,
            detail: None,
            status,
            started_us: 0,
            ended_us: 0,
            tool_us: None,
        }
    }

    pub fn tool(mut self, tool: &str) -> Self {
        self.tool = Some(tool.to_string());
        self
    }

    pub fn detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = Some(detail.into());
        self
    }

    pub fn elapsed_us(&self) -> u64 {
        self.ended_us.saturating_sub(self.started_us)
    }

    /// One line of controller-visible history. Timing is left out so the
    /// controller context stays deterministic.
    fn summary(&self) -> String {
        let mut line = format!("{}. ", self.seq);
        let tool = self.tool.as_deref().unwrap_or("-");
        match self.kind {
            StepKind::FormatInput => {
                let vars: Vec<&str> = self.outputs.keys().map(String::as_str).collect();
                let _ = write!(line, "format_input bound [{}]", vars.join(", "));
            }
            StepKind::Tool => {
                let _ = write!(line, "CALL {tool} {}", self.status.as_str());
                if !self.outputs.is_empty() {
                    let vars: Vec<&str> = self.outputs.keys().map(String::as_str).collect();
                    let _ = write!(line, " -> {}", vars.join(", "));
                }
            }
            StepKind::AskUser => {
                let _ = write!(line, "ASK {}", self.variable.as_deref().unwrap_or("-"));
            }
            StepKind::Clarification => {
                let _ = write!(
                    line,
                    "user supplied {}",
                    self.variable.as_deref().unwrap_or("-")
                );
            }
            StepKind::AuthRequest => {
                let _ = write!(
                    line,
                    "credentials requested for {}",
                    self.detail.as_deref().unwrap_or("-")
                );
            }
            StepKind::Credentials => {
                let _ = write!(
                    line,
                    "credentials supplied for {}",
                    self.detail.as_deref().unwrap_or("-")
                );
            }
            StepKind::Output => {
                let _ = write!(line, "FINISH {tool} {}", self.status.as_str());
            }
            StepKind::Error => {
                let _ = write!(line, "error");
            }
        }
        if self.status == StepStatus::Failed {
            if let Some(d) = &self.detail {
                let _ = write!(
                    line,
                    ": {}",
                    d.split_whitespace().collect::<Vec<_>>().join(" ")
                );
            }
        }
        line
    }
}

/// The instruction and graph a turn ran against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnRecord {
    pub turn: u32,
    pub instruction: String,
    pub graph: GraphFile,
}

/// Append-only step log of a session.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExecutionHistory {
    pub turns: Vec<TurnRecord>,
    pub events: Vec<StepEvent>,
}

impl ExecutionHistory {
    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn last_seq(&self) -> u64 {
        self.events.last().map_or(0, |e| e.seq)
    }

    /// Stamps `event` with the next seq and appends it.
    pub(crate) fn push(&mut self, mut event: StepEvent) -> StepEvent {
        event.seq = self.last_seq() + 1;
        self.events.push(event.clone());
        event
    }

    pub fn turn(&self, turn: u32) -> Option<&TurnRecord> {
        self.turns.iter().find(|t| t.turn == turn)
    }

    pub fn events_in_turn(&self, turn: u32) -> impl Iterator<Item = &StepEvent> {
        self.events.iter().filter(move |e| e.turn == turn)
    }

    /// Controller view of one turn.
    pub fn render_turn(&self, turn: u32) -> String {
        let mut out = String::new();
        for e in self.events_in_turn(turn) {
            out.push_str(&e.summary());
            out.push('\n');
        }
        out
    }

    pub fn tool_executions(&self) -> usize {
        self.events
            .iter()
            .filter(|e| e.kind == StepKind::Tool)
            .count()
    }
}

pub(crate) fn now_us() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_micros() as u64)
        .unwrap_or_default()
}
