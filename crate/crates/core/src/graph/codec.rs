use serde::{Deserialize, Serialize};

use super::{validate_graph, GraphError, MetaProgramGraph, ToolSpec, VariableSpec};

/// On-disk layout of a graph definition file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphFile {
    pub variables: Vec<VariableSpec>,
    pub tools: Vec<ToolSpec>,
}

impl From<&MetaProgramGraph> for GraphFile {
    fn from(graph: &MetaProgramGraph) -> Self {
        GraphFile {
            variables: graph.variables().to_vec(),
            tools: graph.tools().to_vec(),
        }
    }
}

impl GraphFile {
    pub fn into_graph(self) -> MetaProgramGraph {
        MetaProgramGraph::new(self.variables, self.tools)
    }
}

/// Canonical text form: pretty JSON with tools and variables sorted by id
/// and a trailing newline. Equal graphs serialize to identical bytes.
pub fn serialize_graph(graph: &MetaProgramGraph) -> String {
    let file = GraphFile::from(graph);
    let mut text = serde_json::to_string_pretty(&file).expect("graph serializes");
    text.push('\n');
    text
}

pub fn deserialize_graph(text: &str) -> Result<MetaProgramGraph, GraphError> {
    let file: GraphFile = serde_json::from_str(text).map_err(|e| GraphError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let graph = MetaProgramGraph::new(file.variables, file.tools);
    let report = validate_graph(&graph);
    if report.is_empty() {
        Ok(graph)
    } else {
        Err(GraphError::Invalid(report))
    }
}
