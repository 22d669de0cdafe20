use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{MetaProgramGraph, SemanticType, ToolSpec, Value};

/// Where a bound value came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum Provenance {
    InputFormatter,
    ToolOutput { tool: String },
    UserClarification,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum VariableState {
    Unbound,
    Bound {
        value: Value,
        provenance: Provenance,
        /// Logical clock of the store at binding time.
        bound_at: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StoreError {
    #[error("unknown variable {0:?}")]
    UnknownVariable(String),
    #[error("type mismatch for {var:?}: expected {expected}, got {found}")]
    TypeMismatch {
        var: String,
        expected: SemanticType,
        found: SemanticType,
    },
    #[error("required input {var:?} of tool {tool:?} is unbound")]
    UnboundInput { tool: String, var: String },
}

/// Per-run variable bindings. Binding returns a new store version; a shared
/// store is never mutated in place.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableStore {
    entries: BTreeMap<String, VariableState>,
    clock: u64,
}

impl VariableStore {
    /// A store with every variable of `graph` unbound.
    pub fn new(graph: &MetaProgramGraph) -> Self {
        VariableStore {
            entries: graph
                .variables()
                .iter()
                .map(|v| (v.id.clone(), VariableState::Unbound))
                .collect(),
            clock: 0,
        }
    }

    pub fn state(&self, var: &str) -> Option<&VariableState> {
        self.entries.get(var)
    }

    pub fn value(&self, var: &str) -> Option<&Value> {
        match self.entries.get(var)? {
            VariableState::Bound { value, .. } => Some(value),
            VariableState::Unbound => None,
        }
    }

    pub fn is_bound(&self, var: &str) -> bool {
        self.value(var).is_some()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &VariableState)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn bound_count(&self) -> usize {
        self.entries
            .values()
            .filter(|s| matches!(s, VariableState::Bound { .. }))
            .count()
    }

    /// Binds `var`, checking it exists and the payload type matches.
    pub fn bind(
        &self,
        graph: &MetaProgramGraph,
        var: &str,
        value: Value,
        provenance: Provenance,
    ) -> Result<VariableStore, StoreError> {
        let spec = graph
            .variable(var)
            .filter(|_| self.entries.contains_key(var))
            .ok_or_else(|| StoreError::UnknownVariable(var.to_string()))?;
        if spec.semantic_type != value.semantic_type() {
            return Err(StoreError::TypeMismatch {
                var: var.to_string(),
                expected: spec.semantic_type,
                found: value.semantic_type(),
            });
        }
        let mut next = self.clone();
        next.clock += 1;
        next.entries.insert(
            var.to_string(),
            VariableState::Bound {
                value,
                provenance,
                bound_at: next.clock,
            },
        );
        Ok(next)
    }

    /// Reads a tool's arguments from the bound values, keyed by parameter.
    /// Unbound optional inputs are omitted.
    pub fn arguments_for(&self, tool: &ToolSpec) -> Result<BTreeMap<String, Value>, StoreError> {
        let mut args = BTreeMap::new();
        for input in &tool.inputs {
            match self.value(&input.var) {
                Some(v) => {
                    args.insert(input.param.clone(), v.clone());
                }
                None if input.required => {
                    return Err(StoreError::UnboundInput {
                        tool: tool.id.clone(),
                        var: input.var.clone(),
                    })
                }
                None => {}
            }
        }
        Ok(args)
    }

    /// Canonical JSON, used for byte comparisons of replayed runs.
    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string(self).expect("store serializes")
    }
}
