//! Output formatter: renders an output tool's bound inputs for the user.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::backend::{BackendError, CompletionBackend, DEFAULT_FALLBACK};
use super::context::{single_line, AgentContext};
use crate::graph::{
    FileRef, GeoField, PlotSpec, RenderKind, SemanticType, Table, ToolKind, ToolSpec, Value,
    VariableStore,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum RenderedOutput {
    Text {
        text: String,
        /// Bound values the text was phrased from, verbatim.
        values: BTreeMap<String, String>,
    },
    Table(Table),
    PlotSpec(PlotSpec),
    DownloadButton(FileRef),
    PageView {
        url: String,
    },
    MapView(GeoField),
    AuthRequest {
        service: String,
    },
}

impl RenderedOutput {
    pub fn kind(&self) -> RenderKind {
        match self {
            RenderedOutput::Text { .. } => RenderKind::Text,
            RenderedOutput::Table(_) => RenderKind::Table,
            RenderedOutput::PlotSpec(_) => RenderKind::PlotSpec,
            RenderedOutput::DownloadButton(_) => RenderKind::DownloadButton,
            RenderedOutput::PageView { .. } => RenderKind::PageView,
            RenderedOutput::MapView(_) => RenderKind::MapView,
            RenderedOutput::AuthRequest { .. } => RenderKind::AuthRequest,
        }
    }

    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string(self).expect("output serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OutputError {
    #[error("tool {0:?} is not an output tool")]
    NotASink(String),
    #[error("required input {var:?} of output tool {tool:?} is unbound")]
    UnboundRequiredInput { tool: String, var: String },
    #[error("output tool {tool:?} cannot render {kind:?}: {detail}")]
    Render {
        tool: String,
        kind: RenderKind,
        detail: String,
    },
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// Presentation chosen for a sink: its declared render kind, else derived
/// from the type of its first input.
pub fn render_kind_for(
    sink: &ToolSpec,
    store_types: impl Fn(&str) -> Option<SemanticType>,
) -> RenderKind {
    if sink.kind == ToolKind::ResponseOutput {
        return RenderKind::Text;
    }
    sink.render.unwrap_or_else(|| {
        sink.inputs
            .first()
            .and_then(|i| store_types(&i.var))
            .map(RenderKind::for_input_type)
            .unwrap_or(RenderKind::Text)
    })
}

fn value_text(v: &Value) -> String {
    match v {
        Value::Date(d) => d.to_string(),
        Value::FileRef(f) => format!("{}:{}", f.service, f.path),
        Value::Credential { service } => format!("authenticated:{service}"),
        other => other
            .as_text()
            .map(str::to_string)
            .unwrap_or_else(|| serde_json::to_string(other).unwrap_or_default()),
    }
}

/// Renders `sink` from the store. Data always comes from bound values; the
/// backend is consulted only to phrase text responses.
pub fn format_output(
    ctx: &AgentContext,
    sink: &ToolSpec,
    store: &VariableStore,
    backend: &dyn CompletionBackend,
) -> Result<RenderedOutput, OutputError> {
    if !sink.is_sink() {
        return Err(OutputError::NotASink(sink.id.clone()));
    }
    let mut inputs: Vec<&Value> = Vec::new();
    for input in &sink.inputs {
        match store.value(&input.var) {
            Some(v) => inputs.push(v),
            None if input.required => {
                return Err(OutputError::UnboundRequiredInput {
                    tool: sink.id.clone(),
                    var: input.var.clone(),
                })
            }
            None => {}
        }
    }
    let kind = render_kind_for(sink, |var| store.value(var).map(Value::semantic_type));
    let fail = |detail: &str| OutputError::Render {
        tool: sink.id.clone(),
        kind,
        detail: detail.to_string(),
    };
    let first_of = |ty: SemanticType| inputs.iter().copied().find(|v| v.semantic_type() == ty);

    let out = match kind {
        RenderKind::Text => {
            let values: BTreeMap<String, String> = sink
                .inputs
                .iter()
                .filter_map(|i| {
                    store
                        .value(&i.var)
                        .map(|v| (i.param.clone(), value_text(v)))
                })
                .collect();
            let text = if sink.kind == ToolKind::ResponseOutput {
                phrase(ctx, &values, backend)?
            } else {
                None
            }
            .unwrap_or_else(|| values.values().cloned().collect::<Vec<_>>().join("\n"));
            RenderedOutput::Text { text, values }
        }
        RenderKind::Table => match first_of(SemanticType::Table) {
            Some(Value::Table(t)) => RenderedOutput::Table(t.clone()),
            _ => return Err(fail("no table input")),
        },
        RenderKind::PlotSpec => {
            let Some(Value::Table(table)) = first_of(SemanticType::Table) else {
                return Err(fail("no table input"));
            };
            let metrics = match first_of(SemanticType::Text) {
                Some(Value::Text(m)) => m.clone(),
                _ => table
                    .columns
                    .iter()
                    .skip(1)
                    .cloned()
                    .collect::<Vec<_>>()
                    .join(","),
            };
            RenderedOutput::PlotSpec(PlotSpec::from_table(table, &metrics).map_err(|e| fail(&e))?)
        }
        RenderKind::DownloadButton => match first_of(SemanticType::FileRef) {
            Some(Value::FileRef(f)) => RenderedOutput::DownloadButton(f.clone()),
            _ => return Err(fail("no file input")),
        },
        RenderKind::PageView => {
            match first_of(SemanticType::Url).or_else(|| first_of(SemanticType::PageRef)) {
                Some(Value::Url(u)) | Some(Value::PageRef(u)) => {
                    RenderedOutput::PageView { url: u.clone() }
                }
                _ => return Err(fail("no url input")),
            }
        }
        RenderKind::MapView => match first_of(SemanticType::GeoField) {
            Some(Value::GeoField(g)) => RenderedOutput::MapView(g.clone()),
            _ => return Err(fail("no field input")),
        },
        RenderKind::AuthRequest => return Err(fail("auth requests come from the engine")),
    };
    Ok(out)
}

fn phrase(
    ctx: &AgentContext,
    values: &BTreeMap<String, String>,
    backend: &dyn CompletionBackend,
) -> Result<Option<String>, BackendError> {
    let mut prompt = String::from("ROLE: output_formatter\n");
    prompt.push_str(&format!("TASK: {}\n", ctx.task));
    prompt.push_str("VALUES:\n");
    for (k, v) in values {
        prompt.push_str(&format!("{k} = {}\n", single_line(v)));
    }
    prompt.push_str(
        "Phrase a short answer using these values verbatim. Reply NONE to show them as-is.\n",
    );
    let text = backend.complete(&prompt)?;
    let text = text.trim();
    if text.is_empty() || text == DEFAULT_FALLBACK {
        return Ok(None);
    }
    Ok(Some(text.to_string()))
}
