//! Optional tools that are plugged in at run time rather than shipped in
//! the built-in catalog.

use std::collections::BTreeMap;
use std::sync::Arc;

use super::adapter::{ToolAdapter, ToolCall, ToolError};
use super::builtin::entry;
use super::mock::MockServices;
use super::runtime::{AdapterKey, RegistrationHandle, ToolRuntime};
use crate::graph::{ToolKind, ToolSpec, Value};
use crate::registry::{Registry, RegistryError, ToolEntry};

/// The field map UI: a lookup tool that resolves a field's boundary and a
/// sink that shows it on a map.
pub fn map_ui() -> Vec<ToolEntry> {
    vec![
        entry(
            ToolSpec::new(
                "locate_field",
                "Field locator",
                ToolKind::ExternalApi,
                "Boundary polygon of a named field",
            )
            .input("field", "field_name")
            .output("field_shape"),
            &["map", "field", "named", "boundary", "locate"],
            "Look up the boundary of a field on the farm.",
        ),
        entry(
            ToolSpec::new(
                "show_field_map",
                "Field map",
                ToolKind::UiOutput,
                "Draws a field on a map",
            )
            .input("field", "field_shape"),
            &["map", "see", "field"],
            "Draw a map of a field.",
        ),
    ]
}

pub struct FieldMapAdapter {
    services: Arc<MockServices>,
}

impl FieldMapAdapter {
    pub fn new(services: Arc<MockServices>) -> Self {
        FieldMapAdapter { services }
    }
}

impl ToolAdapter for FieldMapAdapter {
    fn execute(&self, call: &ToolCall) -> Result<BTreeMap<String, Value>, ToolError> {
        let name = call.text("field")?;
        let field = self
            .services
            .field_boundary(name)
            .map_err(ToolError::failure)?;
        call.outputs([Value::GeoField(field)])
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ExtensionError {
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Tool(#[from] ToolError),
}

/// Registers the map UI descriptors and the locator adapter.
pub fn install_map_ui(
    registry: &Registry,
    runtime: &ToolRuntime,
    services: Arc<MockServices>,
) -> Result<RegistrationHandle, ExtensionError> {
    let handle = runtime.register_adapter(
        AdapterKey::Tool("locate_field".into()),
        Arc::new(FieldMapAdapter::new(services)),
    )?;
    for e in map_ui() {
        if let Err(err) = registry.register_tool(e) {
            runtime.unregister(handle);
            return Err(err.into());
        }
    }
    Ok(handle)
}
