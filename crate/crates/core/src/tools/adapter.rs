use std::collections::BTreeMap;
use std::time::Duration;

use super::credentials::CredentialSlot;
use crate::graph::{Date, FileRef, Table, ToolSpec, Value};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ToolError {
    #[error("credentials for {0:?} are missing")]
    AuthMissing(String),
    #[error("tool failure: {0}")]
    Failure(String),
    #[error("tool timed out after {0:?}")]
    Timeout(Duration),
    #[error("an adapter is already registered for {0}")]
    DuplicateRegistration(String),
}

impl ToolError {
    pub fn failure(detail: impl std::fmt::Display) -> Self {
        ToolError::Failure(detail.to_string())
    }
}

/// Everything an adapter gets to see: its descriptor, arguments read from
/// the store, and the session credential for its protected service.
#[derive(Debug, Clone)]
pub struct ToolCall {
    pub spec: ToolSpec,
    pub args: BTreeMap<String, Value>,
    pub credential: Option<CredentialSlot>,
}

impl ToolCall {
    pub fn arg(&self, param: &str) -> Result<&Value, ToolError> {
        self.args.get(param).ok_or_else(|| {
            ToolError::Failure(format!("{}: missing argument {param:?}", self.spec.id))
        })
    }

    pub fn opt_text(&self, param: &str) -> Option<&str> {
        self.args.get(param).and_then(Value::as_text)
    }

    pub fn text(&self, param: &str) -> Result<&str, ToolError> {
        let v = self.arg(param)?;
        v.as_text().ok_or_else(|| self.wrong_type(param, v))
    }

    pub fn date(&self, param: &str) -> Result<&Date, ToolError> {
        match self.arg(param)? {
            Value::Date(d) => Ok(d),
            v => Err(self.wrong_type(param, v)),
        }
    }

    pub fn file(&self, param: &str) -> Result<&FileRef, ToolError> {
        match self.arg(param)? {
            Value::FileRef(f) => Ok(f),
            v => Err(self.wrong_type(param, v)),
        }
    }

    pub fn table(&self, param: &str) -> Result<&Table, ToolError> {
        match self.arg(param)? {
            Value::Table(t) => Ok(t),
            v => Err(self.wrong_type(param, v)),
        }
    }

    fn wrong_type(&self, param: &str, v: &Value) -> ToolError {
        ToolError::Failure(format!(
            "{}: argument {param:?} has type {}",
            self.spec.id,
            v.semantic_type()
        ))
    }

    /// Pairs `values` with the declared outputs, in order.
    pub fn outputs(
        &self,
        values: impl IntoIterator<Item = Value>,
    ) -> Result<BTreeMap<String, Value>, ToolError> {
        let values: Vec<Value> = values.into_iter().collect();
        if values.len() != self.spec.outputs.len() {
            return Err(ToolError::Failure(format!(
                "{}: produced {} values for {} outputs",
                self.spec.id,
                values.len(),
                self.spec.outputs.len()
            )));
        }
        Ok(self.spec.outputs.iter().cloned().zip(values).collect())
    }
}

pub trait ToolAdapter: Send + Sync {
    /// Returns one value per declared output variable.
    fn execute(&self, call: &ToolCall) -> Result<BTreeMap<String, Value>, ToolError>;
}

impl<F> ToolAdapter for F
where
    F: Fn(&ToolCall) -> Result<BTreeMap<String, Value>, ToolError> + Send + Sync,
{
    fn execute(&self, call: &ToolCall) -> Result<BTreeMap<String, Value>, ToolError> {
        self(call)
    }
}

/// Copies each input, in order, to the output at the same position.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityAdapter;

impl ToolAdapter for IdentityAdapter {
    fn execute(&self, call: &ToolCall) -> Result<BTreeMap<String, Value>, ToolError> {
        let values = call
            .spec
            .inputs
            .iter()
            .filter_map(|i| call.args.get(&i.param).cloned());
        call.outputs(values)
    }
}
