use serde::Serialize;

use crate::graph::{serialize_graph, MetaProgramGraph, SemanticType, VariableStore};

/// One variable as the agents see it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VarSummary {
    pub id: String,
    pub semantic_type: SemanticType,
    pub bound: bool,
    pub preview: Option<String>,
}

/// Everything an agent reads: task, graph, store snapshot and history.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AgentContext {
    pub task: String,
    pub graph_text: String,
    pub store_summary: Vec<VarSummary>,
    pub history_text: String,
}

impl AgentContext {
    pub fn new(
        task: &str,
        graph: &MetaProgramGraph,
        store: &VariableStore,
        history_text: &str,
    ) -> Self {
        let store_summary = graph
            .variables()
            .iter()
            .map(|v| {
                let value = store.value(&v.id);
                VarSummary {
                    id: v.id.clone(),
                    semantic_type: v.semantic_type,
                    bound: value.is_some(),
                    preview: value.map(|v| v.preview()),
                }
            })
            .collect();
        AgentContext {
            task: single_line(task),
            graph_text: serialize_graph(graph),
            store_summary,
            history_text: history_text.to_string(),
        }
    }

    pub(crate) fn render_store(&self, out: &mut String) {
        for v in &self.store_summary {
            match &v.preview {
                Some(p) => out.push_str(&format!(
                    "VAR {} [{}] BOUND = {}\n",
                    v.id, v.semantic_type, p
                )),
                None => out.push_str(&format!("VAR {} [{}] UNBOUND\n", v.id, v.semantic_type)),
            }
        }
    }
}

pub(crate) fn single_line(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}
