use serde::{Deserialize, Serialize};

use super::value::SemanticType;

/// A variable node (the gray boxes of a meta-program graph).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariableSpec {
    pub id: String,
    pub name: String,
    pub description: String,
    pub semantic_type: SemanticType,
}

impl VariableSpec {
    pub fn new(id: &str, name: &str, semantic_type: SemanticType, description: &str) -> Self {
        VariableSpec {
            id: id.to_string(),
            name: name.to_string(),
            description: description.to_string(),
            semantic_type,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolKind {
    ExternalApi,
    Transform,
    AuthGate,
    UiOutput,
    ResponseOutput,
    UserInput,
}

impl ToolKind {
    pub fn is_sink(self) -> bool {
        matches!(self, ToolKind::UiOutput | ToolKind::ResponseOutput)
    }
}

/// How an output tool presents its inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RenderKind {
    Text,
    Table,
    PlotSpec,
    DownloadButton,
    PageView,
    MapView,
    AuthRequest,
}

impl RenderKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RenderKind::Text => "text",
            RenderKind::Table => "table",
            RenderKind::PlotSpec => "plot_spec",
            RenderKind::DownloadButton => "download_button",
            RenderKind::PageView => "page_view",
            RenderKind::MapView => "map_view",
            RenderKind::AuthRequest => "auth_request",
        }
    }

    /// Default presentation for a ui sink whose primary input has this type.
    pub fn for_input_type(ty: SemanticType) -> RenderKind {
        match ty {
            SemanticType::FileRef => RenderKind::DownloadButton,
            SemanticType::Url | SemanticType::PageRef => RenderKind::PageView,
            SemanticType::GeoField => RenderKind::MapView,
            SemanticType::Table => RenderKind::Table,
            _ => RenderKind::Text,
        }
    }
}

/// Binds one tool parameter to the variable that feeds it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputBinding {
    pub param: String,
    pub var: String,
    pub required: bool,
}

impl InputBinding {
    pub fn required(param: &str, var: &str) -> Self {
        InputBinding {
            param: param.to_string(),
            var: var.to_string(),
            required: true,
        }
    }

    pub fn optional(param: &str, var: &str) -> Self {
        InputBinding {
            required: false,
            ..InputBinding::required(param, var)
        }
    }
}

/// A tool node (the colored boxes).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub id: String,
    pub name: String,
    pub description: String,
    pub kind: ToolKind,
    #[serde(default)]
    pub inputs: Vec<InputBinding>,
    #[serde(default)]
    pub outputs: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub protected_service: Option<String>,
    /// Presentation of a sink; derived from its first input when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub render: Option<RenderKind>,
}

impl ToolSpec {
    pub fn new(id: &str, name: &str, kind: ToolKind, description: &str) -> Self {
        ToolSpec {
            id: id.to_string(),
            name: name.to_string(),
            description: description.to_string(),
            kind,
            inputs: Vec::new(),
            outputs: Vec::new(),
            protected_service: None,
            render: None,
        }
    }

    pub fn input(mut self, param: &str, var: &str) -> Self {
        self.inputs.push(InputBinding::required(param, var));
        self
    }

    pub fn optional_input(mut self, param: &str, var: &str) -> Self {
        self.inputs.push(InputBinding::optional(param, var));
        self
    }

    pub fn output(mut self, var: &str) -> Self {
        self.outputs.push(var.to_string());
        self
    }

    pub fn protected(mut self, service: &str) -> Self {
        self.protected_service = Some(service.to_string());
        self
    }

    pub fn render(mut self, kind: RenderKind) -> Self {
        self.render = Some(kind);
        self
    }

    pub fn is_sink(&self) -> bool {
        self.kind.is_sink()
    }

    pub fn required_vars(&self) -> impl Iterator<Item = &str> {
        self.inputs
            .iter()
            .filter(|i| i.required)
            .map(|i| i.var.as_str())
    }

    /// Every variable id this tool mentions, inputs first.
    pub fn referenced_vars(&self) -> impl Iterator<Item = &str> {
        self.inputs
            .iter()
            .map(|i| i.var.as_str())
            .chain(self.outputs.iter().map(String::as_str))
    }
}
