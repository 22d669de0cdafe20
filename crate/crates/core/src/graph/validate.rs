use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;

use super::{MetaProgramGraph, RenderKind, ToolKind};

/// One broken rule, naming the offending element.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Violation {
    MalformedId { element: String },
    DuplicateVariable { id: String },
    DuplicateTool { id: String },
    UnknownVariable { tool: String, variable: String },
    DuplicateParam { tool: String, param: String },
    SinkHasOutputs { tool: String },
    EntryCount { found: usize },
    EntryHasInputs { tool: String },
    RenderOnNonSink { tool: String },
    RenderWithoutInputs { tool: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::MalformedId { element } => {
                write!(f, "{element:?}: ids must match [a-z0-9_]+")
            }
            Violation::DuplicateVariable { id } => write!(f, "variable {id:?} declared twice"),
            Violation::DuplicateTool { id } => write!(f, "tool {id:?} declared twice"),
            Violation::UnknownVariable { tool, variable } => {
                write!(f, "tool {tool:?} references missing variable {variable:?}")
            }
            Violation::DuplicateParam { tool, param } => {
                write!(f, "tool {tool:?} binds parameter {param:?} twice")
            }
            Violation::SinkHasOutputs { tool } => {
                write!(f, "output tool {tool:?} must not declare outputs")
            }
            Violation::EntryCount { found } => {
                write!(
                    f,
                    "single-entry rule: expected exactly one user_input tool, found {found}"
                )
            }
            Violation::EntryHasInputs { tool } => {
                write!(f, "user_input tool {tool:?} must not take inputs")
            }
            Violation::RenderOnNonSink { tool } => {
                write!(
                    f,
                    "tool {tool:?} declares a render kind but is not an output tool"
                )
            }
            Violation::RenderWithoutInputs { tool } => {
                write!(f, "output tool {tool:?} has no inputs to render")
            }
        }
    }
}

pub fn is_valid_id(id: &str) -> bool {
    !id.is_empty()
        && id
            .bytes()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_')
}

/// Checks every structural rule. An empty report means the graph is valid.
pub fn validate_graph(graph: &MetaProgramGraph) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut var_ids = BTreeSet::new();
    for v in graph.variables() {
        if !is_valid_id(&v.id) {
            out.push(Violation::MalformedId {
                element: v.id.clone(),
            });
        }
        if !var_ids.insert(v.id.as_str()) {
            out.push(Violation::DuplicateVariable { id: v.id.clone() });
        }
    }

    let mut tool_ids = BTreeSet::new();
    let mut entries = 0;
    for t in graph.tools() {
        if !is_valid_id(&t.id) {
            out.push(Violation::MalformedId {
                element: t.id.clone(),
            });
        }
        if !tool_ids.insert(t.id.as_str()) {
            out.push(Violation::DuplicateTool { id: t.id.clone() });
        }
        let mut reported = BTreeSet::new();
        for var in t.referenced_vars() {
            if !var_ids.contains(var) && reported.insert(var) {
                out.push(Violation::UnknownVariable {
                    tool: t.id.clone(),
                    variable: var.to_string(),
                });
            }
        }
        let mut params = BTreeSet::new();
        for i in &t.inputs {
            if !params.insert(i.param.as_str()) {
                out.push(Violation::DuplicateParam {
                    tool: t.id.clone(),
                    param: i.param.clone(),
                });
            }
        }
        if t.is_sink() && !t.outputs.is_empty() {
            out.push(Violation::SinkHasOutputs { tool: t.id.clone() });
        }
        if t.render.is_some() && !t.is_sink() {
            out.push(Violation::RenderOnNonSink { tool: t.id.clone() });
        }
        if t.kind == ToolKind::UiOutput
            && t.inputs.is_empty()
            && t.render != Some(RenderKind::AuthRequest)
        {
            out.push(Violation::RenderWithoutInputs { tool: t.id.clone() });
        }
        if t.kind == ToolKind::UserInput {
            entries += 1;
            if !t.inputs.is_empty() {
                out.push(Violation::EntryHasInputs { tool: t.id.clone() });
            }
        }
    }
    if entries != 1 {
        out.push(Violation::EntryCount { found: entries });
    }
    out
}
