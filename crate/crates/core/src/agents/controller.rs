//! Program controller: picks the next step of control flow.
//!
//! The backend answers with one command line:
//!
//! ```text
//! CALL <tool_id>
//! ASK <variable_id> <question...>
//! FINISH <output_tool_id>
//! ```
//!
//! Only the first non-empty line counts. The controller never supplies
//! argument values; those come from the variable store.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::backend::{BackendError, CompletionBackend};
use super::context::{single_line, AgentContext};
use crate::graph::{legal_tools, MetaProgramGraph, SemanticType, VariableStore};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "decision", rename_all = "snake_case")]
pub enum ControllerDecision {
    CallTool { tool: String },
    AskUser { variable: String, prompt: String },
    Finish { tool: String },
}

/// The choices open to the controller for one store snapshot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecisionMenu {
    /// Legal non-sink tools.
    pub callable: BTreeSet<String>,
    /// Legal output tools.
    pub finishable: BTreeSet<String>,
    /// Unbound variables the user may be asked for.
    pub askable: BTreeSet<String>,
    /// Tools held back only by a missing credential, with the service.
    pub needs_credentials: BTreeMap<String, String>,
}

impl DecisionMenu {
    pub fn new(graph: &MetaProgramGraph, store: &VariableStore, auth: &BTreeSet<String>) -> Self {
        let legal = legal_tools(graph, store, auth);
        let (finishable, callable) = legal
            .into_iter()
            .partition(|id| graph.tool(id).is_some_and(|t| t.is_sink()));
        let askable = graph
            .variables()
            .iter()
            .filter(|v| v.semantic_type != SemanticType::Credential && !store.is_bound(&v.id))
            .map(|v| v.id.clone())
            .collect();
        let needs_credentials = graph
            .tools()
            .iter()
            .filter_map(|t| {
                crate::graph::blocked_only_by_credentials(graph, store, auth, &t.id)
                    .map(|s| (t.id.clone(), s.to_string()))
            })
            .collect();
        DecisionMenu {
            callable,
            finishable,
            askable,
            needs_credentials,
        }
    }

    pub fn legal(&self) -> BTreeSet<String> {
        self.callable.union(&self.finishable).cloned().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("empty response")]
    Empty,
    #[error("unrecognized command: {0:?}")]
    UnknownCommand(String),
    #[error("missing argument in {0:?}")]
    MissingArgument(String),
    #[error("tool {0:?} is not legal now")]
    IllegalTool(String),
    #[error("{0:?} is an output tool; use FINISH")]
    CallOnSink(String),
    #[error("{0:?} is not a legal output tool")]
    NotFinishable(String),
    #[error("cannot ask for {0:?}: not an unbound, user-suppliable variable")]
    NotAskable(String),
}

/// Parses one controller response against the current menu.
pub fn parse_decision(
    response: &str,
    menu: &DecisionMenu,
) -> Result<ControllerDecision, ParseError> {
    let line = response
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty())
        .ok_or(ParseError::Empty)?;
    let mut parts = line.splitn(2, char::is_whitespace);
    let command = parts.next().unwrap_or_default();
    let rest = parts.next().unwrap_or("").trim();
    let mut args = rest.splitn(2, char::is_whitespace);
    let target = args.next().filter(|s| !s.is_empty());
    match command {
        "CALL" => {
            let tool = target.ok_or_else(|| ParseError::MissingArgument(line.to_string()))?;
            if menu.callable.contains(tool) {
                Ok(ControllerDecision::CallTool {
                    tool: tool.to_string(),
                })
            } else if menu.finishable.contains(tool) {
                Err(ParseError::CallOnSink(tool.to_string()))
            } else {
                Err(ParseError::IllegalTool(tool.to_string()))
            }
        }
        "FINISH" => {
            let tool = target.ok_or_else(|| ParseError::MissingArgument(line.to_string()))?;
            if menu.finishable.contains(tool) {
                Ok(ControllerDecision::Finish {
                    tool: tool.to_string(),
                })
            } else {
                Err(ParseError::NotFinishable(tool.to_string()))
            }
        }
        "ASK" => {
            let variable = target.ok_or_else(|| ParseError::MissingArgument(line.to_string()))?;
            if !menu.askable.contains(variable) {
                return Err(ParseError::NotAskable(variable.to_string()));
            }
            let prompt = args.next().map(str::trim).unwrap_or("").to_string();
            Ok(ControllerDecision::AskUser {
                variable: variable.to_string(),
                prompt,
            })
        }
        _ => Err(ParseError::UnknownCommand(line.to_string())),
    }
}

fn join(set: impl IntoIterator<Item = impl AsRef<str>>) -> String {
    let items: Vec<String> = set.into_iter().map(|s| s.as_ref().to_string()).collect();
    if items.is_empty() {
        "(none)".to_string()
    } else {
        items.join(", ")
    }
}

/// Renders the controller prompt. Pure: same inputs, same bytes.
pub fn build_controller_prompt(
    ctx: &AgentContext,
    menu: &DecisionMenu,
    note: Option<&str>,
) -> String {
    let mut p = String::with_capacity(ctx.graph_text.len() + 1024);
    p.push_str("ROLE: controller\n");
    p.push_str(&format!("TASK: {}\n", ctx.task));
    p.push_str("GRAPH:\n");
    p.push_str(&ctx.graph_text);
    p.push_str("STORE:\n");
    ctx.render_store(&mut p);
    p.push_str("HISTORY:\n");
    if ctx.history_text.is_empty() {
        p.push_str("(empty)\n");
    } else {
        p.push_str(&ctx.history_text);
        if !ctx.history_text.ends_with('\n') {
            p.push('\n');
        }
    }
    p.push_str(&format!("CALLABLE: {}\n", join(&menu.callable)));
    p.push_str(&format!("FINISHABLE: {}\n", join(&menu.finishable)));
    p.push_str(&format!("ASKABLE: {}\n", join(&menu.askable)));
    p.push_str(&format!(
        "NEEDS CREDENTIALS: {}\n",
        join(
            menu.needs_credentials
                .iter()
                .map(|(t, s)| format!("{t} ({s})"))
        )
    ));
    if let Some(note) = note {
        p.push_str(&format!("ERROR: {}\n", single_line(note)));
    }
    p.push_str("Reply with exactly one line: CALL <tool> | ASK <variable> <question> | FINISH <output tool>\n");
    p
}

/// What the engine should do next.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Decide(ControllerDecision),
    /// The controller chose a tool that is held back only by a missing
    /// credential for `service`.
    NeedsCredentials {
        tool: String,
        service: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ControllerError {
    #[error("controller decision unparseable after {attempts} attempts: {last}")]
    Unparseable { attempts: u32, last: ParseError },
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// Asks the backend for a decision, re-prompting with the parse error up
/// to `attempts` calls in total.
pub fn controller_decide(
    ctx: &AgentContext,
    menu: &DecisionMenu,
    backend: &dyn CompletionBackend,
    attempts: u32,
) -> Result<Verdict, ControllerError> {
    let attempts = attempts.max(1);
    let mut note: Option<String> = None;
    let mut last = ParseError::Empty;
    for _ in 0..attempts {
        let prompt = build_controller_prompt(ctx, menu, note.as_deref());
        let response = backend.complete(&prompt)?;
        match parse_decision(&response, menu) {
            Ok(decision) => return Ok(Verdict::Decide(decision)),
            Err(ParseError::IllegalTool(tool)) if menu.needs_credentials.contains_key(&tool) => {
                let service = menu.needs_credentials[&tool].clone();
                return Ok(Verdict::NeedsCredentials { tool, service });
            }
            Err(e) => {
                tracing::debug!(error = %e, "rejected controller response");
                note = Some(format!(
                    "previous reply {:?} rejected: {e}",
                    single_line(&response)
                ));
                last = e;
            }
        }
    }
    Err(ControllerError::Unparseable { attempts, last })
}
