//! Deterministic re-execution of a recorded trace against the same fixtures.

use std::collections::BTreeMap;

use super::history::{ExecutionHistory, StepEvent, StepKind, StepStatus};
use crate::agents::{format_output, AgentContext, CompletionBackend, RenderedOutput};
use crate::graph::{MetaProgramGraph, Provenance, Value, VariableStore};
use crate::tools::{CredentialSlot, Credentials, ToolRuntime};

/// Stand-in token: recorded traces never hold real ones.
const REPLAY_TOKEN: &str = "replay";

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayOutcome {
    /// Store of the last replayed turn.
    pub store: VariableStore,
    /// Last rendered output, if any turn finished.
    pub output: Option<RenderedOutput>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReplayError {
    #[error("step {seq}: {detail}")]
    FixtureMismatch { seq: u64, detail: String },
}

fn mismatch(seq: u64, detail: impl Into<String>) -> ReplayError {
    ReplayError::FixtureMismatch {
        seq,
        detail: detail.into(),
    }
}

fn bind_all(
    graph: &MetaProgramGraph,
    store: VariableStore,
    values: &BTreeMap<String, Value>,
    provenance: &Provenance,
    seq: u64,
) -> Result<VariableStore, ReplayError> {
    values.iter().try_fold(store, |s, (var, value)| {
        s.bind(graph, var, value.clone(), provenance.clone())
            .map_err(|e| mismatch(seq, e.to_string()))
    })
}

/// Re-runs every successful tool step of `history` and checks that
/// arguments, outputs and rendered results come out identical.
pub fn replay(
    history: &ExecutionHistory,
    runtime: &ToolRuntime,
    backend: &dyn CompletionBackend,
) -> Result<ReplayOutcome, ReplayError> {
    let mut outcome = ReplayOutcome {
        store: VariableStore::new(&MetaProgramGraph::default()),
        output: None,
    };
    for record in &history.turns {
        let graph = record.graph.clone().into_graph();
        let mut creds = Credentials::new();
        for service in graph
            .tools()
            .iter()
            .filter_map(|t| t.protected_service.as_deref())
        {
            creds.insert(CredentialSlot::new(service, REPLAY_TOKEN));
        }
        let mut store = VariableStore::new(&graph);
        let mut seen = ExecutionHistory::default();
        for event in history.events_in_turn(record.turn) {
            store = replay_step(
                event,
                &graph,
                store,
                &creds,
                &seen,
                &record.instruction,
                runtime,
                backend,
                &mut outcome,
            )?;
            seen.events.push(event.clone());
        }
        outcome.store = store;
    }
    Ok(outcome)
}

#[allow(clippy::too_many_arguments)]
fn replay_step(
    event: &StepEvent,
    graph: &MetaProgramGraph,
    store: VariableStore,
    creds: &Credentials,
    seen: &ExecutionHistory,
    instruction: &str,
    runtime: &ToolRuntime,
    backend: &dyn CompletionBackend,
    outcome: &mut ReplayOutcome,
) -> Result<VariableStore, ReplayError> {
    let seq = event.seq;
    match (event.kind, event.status) {
        (StepKind::FormatInput, StepStatus::Ok) => bind_all(
            graph,
            store,
            &event.outputs,
            &Provenance::InputFormatter,
            seq,
        ),
        (StepKind::Clarification, StepStatus::Ok) => bind_all(
            graph,
            store,
            &event.outputs,
            &Provenance::UserClarification,
            seq,
        ),
        (StepKind::Tool, StepStatus::Ok) => {
            let tool = event.tool.as_deref().unwrap_or_default();
            let spec = graph
                .tool(tool)
                .ok_or_else(|| mismatch(seq, format!("tool {tool:?} not in the turn graph")))?;
            let args = store
                .arguments_for(spec)
                .map_err(|e| mismatch(seq, e.to_string()))?;
            if args != event.arguments {
                return Err(mismatch(
                    seq,
                    format!("{tool}: recorded arguments differ from store values"),
                ));
            }
            let exec = runtime
                .execute_tool(spec, &store, creds)
                .map_err(|e| mismatch(seq, format!("{tool}: {e}")))?;
            if exec.outputs != event.outputs {
                return Err(mismatch(
                    seq,
                    format!("{tool}: outputs differ from the recording"),
                ));
            }
            bind_all(
                graph,
                store,
                &exec.outputs,
                &Provenance::ToolOutput {
                    tool: tool.to_string(),
                },
                seq,
            )
        }
        (StepKind::Output, StepStatus::Ok) => {
            let tool = event.tool.as_deref().unwrap_or_default();
            let sink = graph.tool(tool).ok_or_else(|| {
                mismatch(seq, format!("output tool {tool:?} not in the turn graph"))
            })?;
            let ctx = AgentContext::new(instruction, graph, &store, &seen.render_turn(event.turn));
            let rendered = format_output(&ctx, sink, &store, backend)
                .map_err(|e| mismatch(seq, e.to_string()))?;
            if Some(&rendered) != event.rendered.as_ref() {
                return Err(mismatch(seq, format!("{tool}: rendered output differs")));
            }
            outcome.output = Some(rendered);
            Ok(store)
        }
        _ => Ok(store),
    }
}
