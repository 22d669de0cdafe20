//! Input formatter: turns an instruction into raw values for variables.

use serde::{Deserialize, Serialize};

use super::backend::{BackendError, CompletionBackend};
use super::context::single_line;
use crate::graph::MetaProgramGraph;

/// Raw `(variable id, text)` pairs proposed by the input formatter. Values
/// are coerced to their semantic type when bound.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BindingProposal {
    pub bindings: Vec<(String, String)>,
}

impl BindingProposal {
    pub fn is_empty(&self) -> bool {
        self.bindings.is_empty()
    }

    pub fn get(&self, var: &str) -> Option<&str> {
        self.bindings
            .iter()
            .find(|(v, _)| v == var)
            .map(|(_, raw)| raw.as_str())
    }
}

pub fn build_formatter_prompt(instruction: &str, graph: &MetaProgramGraph) -> String {
    let mut p = String::from("ROLE: input_formatter\n");
    p.push_str(&format!("INSTRUCTION: {}\n", single_line(instruction)));
    p.push_str("VARIABLES:\n");
    for v in graph.variables() {
        p.push_str(&format!(
            "{} [{}] {}\n",
            v.id,
            v.semantic_type,
            single_line(&v.description)
        ));
    }
    p.push_str("Reply with one line per value stated in the instruction: BIND <variable> <value>. Reply NONE if there are none. Never guess.\n");
    p
}

/// Keeps `BIND <var> <value>` lines naming known variables with a
/// non-empty value. Everything else is dropped; the first value per
/// variable wins.
pub fn parse_bindings(response: &str, graph: &MetaProgramGraph) -> BindingProposal {
    let mut bindings: Vec<(String, String)> = Vec::new();
    for line in response.lines() {
        let Some(rest) = line.trim().strip_prefix("BIND ") else {
            continue;
        };
        let mut parts = rest.trim().splitn(2, char::is_whitespace);
        let var = parts.next().unwrap_or_default();
        let value = parts.next().unwrap_or("").trim();
        if value.is_empty() || graph.variable(var).is_none() {
            continue;
        }
        if bindings.iter().any(|(v, _)| v == var) {
            continue;
        }
        bindings.push((var.to_string(), value.to_string()));
    }
    BindingProposal { bindings }
}

pub fn format_input(
    instruction: &str,
    graph: &MetaProgramGraph,
    backend: &dyn CompletionBackend,
) -> Result<BindingProposal, BackendError> {
    if instruction.trim().is_empty() {
        return Ok(BindingProposal::default());
    }
    let response = backend.complete(&build_formatter_prompt(instruction, graph))?;
    Ok(parse_bindings(&response, graph))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::backend::ScriptedBackend;
    use crate::graph::{SemanticType, ToolKind, ToolSpec, VariableSpec};

    fn graph() -> MetaProgramGraph {
        MetaProgramGraph::new(
            vec![
                VariableSpec::new("menu", "Menu", SemanticType::Text, "data menu"),
                VariableSpec::new("date", "Date", SemanticType::Date, "a day"),
            ],
            vec![ToolSpec::new("user_input", "in", ToolKind::UserInput, "")
                .output("menu")
                .output("date")],
        )
    }

    #[test]
    fn unknown_and_empty_bindings_are_dropped() {
        let p = parse_bindings(
            "BIND menu Realm5\nBIND ghost x\nBIND date \nchatter\nBIND menu Other",
            &graph(),
        );
        assert_eq!(p.bindings, vec![("menu".to_string(), "Realm5".to_string())]);
    }

    #[test]
    fn empty_instruction_yields_empty_proposal() {
        let b = ScriptedBackend::constant("BIND menu Realm5");
        assert!(format_input("", &graph(), &b).unwrap().is_empty());
        assert!(format_input("   ", &graph(), &b).unwrap().is_empty());
    }

    #[test]
    fn fallback_none_is_empty() {
        let b = ScriptedBackend::constant("NONE");
        assert!(format_input("hello", &graph(), &b).unwrap().is_empty());
    }

    #[test]
    fn prompt_lists_variables() {
        let p = build_formatter_prompt("go\nnow", &graph());
        assert!(p.contains("INSTRUCTION: go now\n"));
        assert!(p.contains("date [date] a day\n"));
    }
}
