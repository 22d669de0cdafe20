//! Meta-program graph: typed tools and variables whose edges carry data flow.
//!
//! A graph is bipartite. Each [`ToolSpec`] input binding is an edge
//! variable → tool and each declared output is an edge tool → variable.
//! Cycles are allowed; the engine's step budget bounds execution.

mod codec;
mod spec;
mod store;
mod validate;
mod value;

use std::collections::{BTreeMap, BTreeSet};

pub use codec::{deserialize_graph, serialize_graph, GraphFile};
pub use spec::{InputBinding, RenderKind, ToolKind, ToolSpec, VariableSpec};
pub use store::{Provenance, StoreError, VariableState, VariableStore};
pub use validate::{is_valid_id, validate_graph, Violation};
pub use value::{
    parse_metrics, CoerceError, Date, FileRef, GeoField, PlotSpec, SemanticType, Series, Table,
    Value,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GraphError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid graph: {}", render_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("id collision: {0}")]
    IdCollision(String),
}

fn render_violations(vs: &[Violation]) -> String {
    vs.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

/// Tools and variables kept sorted by id, so equality is structural and
/// independent of insertion order. Duplicates are retained until
/// [`validate_graph`] reports them.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MetaProgramGraph {
    variables: Vec<VariableSpec>,
    tools: Vec<ToolSpec>,
}

impl MetaProgramGraph {
    pub fn new(mut variables: Vec<VariableSpec>, mut tools: Vec<ToolSpec>) -> Self {
        variables.sort_by(|a, b| a.id.cmp(&b.id));
        tools.sort_by(|a, b| a.id.cmp(&b.id));
        MetaProgramGraph { variables, tools }
    }

    pub fn variables(&self) -> &[VariableSpec] {
        &self.variables
    }

    pub fn tools(&self) -> &[ToolSpec] {
        &self.tools
    }

    pub fn variable(&self, id: &str) -> Option<&VariableSpec> {
        self.variables
            .binary_search_by(|v| v.id.as_str().cmp(id))
            .ok()
            .map(|i| &self.variables[i])
    }

    pub fn tool(&self, id: &str) -> Option<&ToolSpec> {
        self.tools
            .binary_search_by(|t| t.id.as_str().cmp(id))
            .ok()
            .map(|i| &self.tools[i])
    }

    pub fn user_input(&self) -> Option<&ToolSpec> {
        self.tools.iter().find(|t| t.kind == ToolKind::UserInput)
    }

    /// Derived edge list as (from, to) id pairs.
    pub fn edges(&self) -> Vec<(String, String)> {
        let mut edges = Vec::new();
        for t in &self.tools {
            for i in &t.inputs {
                edges.push((i.var.clone(), t.id.clone()));
            }
            for o in &t.outputs {
                edges.push((t.id.clone(), o.clone()));
            }
        }
        edges
    }

    /// Adds new tools and variables. Fails on any id already present, and
    /// when the result does not validate.
    pub fn merge_subgraph(
        &self,
        new_tools: Vec<ToolSpec>,
        new_vars: Vec<VariableSpec>,
    ) -> Result<MetaProgramGraph, GraphError> {
        let mut seen_vars: BTreeSet<&str> = self.variables.iter().map(|v| v.id.as_str()).collect();
        for v in &new_vars {
            if !seen_vars.insert(&v.id) {
                return Err(GraphError::IdCollision(v.id.clone()));
            }
        }
        let mut seen_tools: BTreeSet<&str> = self.tools.iter().map(|t| t.id.as_str()).collect();
        for t in &new_tools {
            if !seen_tools.insert(&t.id) {
                return Err(GraphError::IdCollision(t.id.clone()));
            }
        }
        let mut variables = self.variables.clone();
        variables.extend(new_vars);
        let mut tools = self.tools.clone();
        tools.extend(new_tools);
        let merged = MetaProgramGraph::new(variables, tools);
        let report = validate_graph(&merged);
        if report.is_empty() {
            Ok(merged)
        } else {
            Err(GraphError::Invalid(report))
        }
    }
}

/// Tools the controller may pick right now: every required input is bound
/// and any protected service has a credential in `auth`. The entry node is
/// never legal.
pub fn legal_tools(
    graph: &MetaProgramGraph,
    store: &VariableStore,
    auth: &BTreeSet<String>,
) -> BTreeSet<String> {
    graph
        .tools()
        .iter()
        .filter(|t| t.kind != ToolKind::UserInput)
        .filter(|t| t.required_vars().all(|v| store.is_bound(v)))
        .filter(|t| {
            t.protected_service
                .as_ref()
                .is_none_or(|s| auth.contains(s))
        })
        .map(|t| t.id.clone())
        .collect()
}

/// Why a tool is not legal, when credentials are the only thing missing.
pub fn blocked_only_by_credentials<'g>(
    graph: &'g MetaProgramGraph,
    store: &VariableStore,
    auth: &BTreeSet<String>,
    tool_id: &str,
) -> Option<&'g str> {
    let tool = graph.tool(tool_id)?;
    let service = tool.protected_service.as_deref()?;
    if auth.contains(service) || tool.kind == ToolKind::UserInput {
        return None;
    }
    tool.required_vars()
        .all(|v| store.is_bound(v))
        .then_some(service)
}

/// Variable id → semantic type lookup.
pub fn type_index(graph: &MetaProgramGraph) -> BTreeMap<&str, SemanticType> {
    graph
        .variables()
        .iter()
        .map(|v| (v.id.as_str(), v.semantic_type))
        .collect()
}
