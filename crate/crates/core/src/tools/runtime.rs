use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::mpsc;
use std::sync::{Arc, RwLock};
use std::time::{Duration, Instant};

use super::adapter::{ToolAdapter, ToolCall, ToolError};
use super::credentials::Credentials;
use crate::graph::{ToolKind, ToolSpec, Value, VariableStore};

pub const DEFAULT_TOOL_TIMEOUT: Duration = Duration::from_secs(10);

/// What an adapter is registered for. A tool-id binding wins over a kind
/// binding.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum AdapterKey {
    Tool(String),
    Kind(ToolKind),
}

impl fmt::Display for AdapterKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AdapterKey::Tool(id) => write!(f, "tool {id}"),
            AdapterKey::Kind(k) => write!(f, "kind {k:?}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegistrationHandle {
    pub key: AdapterKey,
}

/// Result of one adapter run.
#[derive(Debug, Clone, PartialEq)]
pub struct ToolExecution {
    pub arguments: BTreeMap<String, Value>,
    pub outputs: BTreeMap<String, Value>,
    pub elapsed: Duration,
}

pub struct ToolRuntime {
    adapters: RwLock<HashMap<AdapterKey, Arc<dyn ToolAdapter>>>,
    timeout: Duration,
}

impl Default for ToolRuntime {
    fn default() -> Self {
        Self::new(DEFAULT_TOOL_TIMEOUT)
    }
}

impl fmt::Debug for ToolRuntime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let keys: Vec<String> = self.read().keys().map(ToString::to_string).collect();
        f.debug_struct("ToolRuntime")
            .field("adapters", &keys)
            .field("timeout", &self.timeout)
            .finish()
    }
}

impl ToolRuntime {
    pub fn new(timeout: Duration) -> Self {
        ToolRuntime {
            adapters: RwLock::new(HashMap::new()),
            timeout,
        }
    }

    pub fn timeout(&self) -> Duration {
        self.timeout
    }

    pub fn set_timeout(&mut self, timeout: Duration) {
        self.timeout = timeout;
    }

    fn read(&self) -> std::sync::RwLockReadGuard<'_, HashMap<AdapterKey, Arc<dyn ToolAdapter>>> {
        self.adapters.read().unwrap_or_else(|p| p.into_inner())
    }

    pub fn register_adapter(
        &self,
        key: AdapterKey,
        adapter: Arc<dyn ToolAdapter>,
    ) -> Result<RegistrationHandle, ToolError> {
        let mut map = self.adapters.write().unwrap_or_else(|p| p.into_inner());
        if map.contains_key(&key) {
            return Err(ToolError::DuplicateRegistration(key.to_string()));
        }
        map.insert(key.clone(), adapter);
        Ok(RegistrationHandle { key })
    }

    pub fn unregister(&self, handle: RegistrationHandle) -> bool {
        let mut map = self.adapters.write().unwrap_or_else(|p| p.into_inner());
        map.remove(&handle.key).is_some()
    }

    pub fn has_adapter(&self, spec: &ToolSpec) -> bool {
        self.adapter_for(spec).is_some()
    }

    fn adapter_for(&self, spec: &ToolSpec) -> Option<Arc<dyn ToolAdapter>> {
        let map = self.read();
        map.get(&AdapterKey::Tool(spec.id.clone()))
            .or_else(|| map.get(&AdapterKey::Kind(spec.kind)))
            .cloned()
    }

    /// Runs `spec` with arguments read from `store`. A protected tool
    /// without a credential slot fails before its adapter is touched.
    pub fn execute_tool(
        &self,
        spec: &ToolSpec,
        store: &VariableStore,
        credentials: &Credentials,
    ) -> Result<ToolExecution, ToolError> {
        self.execute_tool_within(spec, store, credentials, self.timeout)
    }

    /// [`ToolRuntime::execute_tool`] with an explicit time limit.
    pub fn execute_tool_within(
        &self,
        spec: &ToolSpec,
        store: &VariableStore,
        credentials: &Credentials,
        timeout: Duration,
    ) -> Result<ToolExecution, ToolError> {
        let credential = match &spec.protected_service {
            Some(service) => Some(
                credentials
                    .get(service)
                    .cloned()
                    .ok_or_else(|| ToolError::AuthMissing(service.clone()))?,
            ),
            None => None,
        };
        let arguments = store.arguments_for(spec).map_err(ToolError::failure)?;
        let adapter = self
            .adapter_for(spec)
            .ok_or_else(|| ToolError::Failure("no adapter".into()))?;
        let call = ToolCall {
            spec: spec.clone(),
            args: arguments.clone(),
            credential,
        };

        let start = Instant::now();
        let (tx, rx) = mpsc::channel();
        std::thread::Builder::new()
            .name(format!("tool-{}", spec.id))
            .spawn(move || {
                let _ = tx.send(adapter.execute(&call));
            })
            .map_err(ToolError::failure)?;
        let outputs = match rx.recv_timeout(timeout) {
            Ok(result) => result?,
            Err(mpsc::RecvTimeoutError::Timeout) => return Err(ToolError::Timeout(timeout)),
            Err(mpsc::RecvTimeoutError::Disconnected) => {
                return Err(ToolError::Failure(format!("{}: adapter panicked", spec.id)))
            }
        };
        let elapsed = start.elapsed();

        let declared: BTreeSet<&str> = spec.outputs.iter().map(String::as_str).collect();
        let produced: BTreeSet<&str> = outputs.keys().map(String::as_str).collect();
        if declared != produced {
            return Err(ToolError::Failure(format!(
                "{}: outputs {produced:?} do not match declared {declared:?}",
                spec.id
            )));
        }
        Ok(ToolExecution {
            arguments,
            outputs,
            elapsed,
        })
    }
}
