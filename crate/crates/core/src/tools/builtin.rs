//! Built-in tool descriptors and their mock-backed adapters.

use std::collections::BTreeMap;
use std::sync::Arc;

use super::adapter::{ToolAdapter, ToolCall, ToolError};
use super::mock::MockServices;
use super::runtime::{AdapterKey, ToolRuntime};
use crate::graph::{RenderKind, SemanticType, ToolKind, ToolSpec, Value, VariableSpec};
use crate::registry::ToolEntry;

/// Shared variable declarations. Every descriptor that mentions a variable
/// carries the same declaration, so graphs built from any subset agree.
pub fn variable(id: &str) -> VariableSpec {
    let (name, ty, desc) = match id {
        "menu" => (
            "Menu",
            SemanticType::Text,
            "Data menu on ADMA, for example Realm5",
        ),
        "metrics" => (
            "Metrics",
            SemanticType::Text,
            "Comma separated columns to plot",
        ),
        "keyword" => ("Keyword", SemanticType::Text, "Part of a file name"),
        "date" => ("Date", SemanticType::Date, "Day of the data, YYYY/M/D"),
        "adma_path" => (
            "ADMA path",
            SemanticType::Path,
            "Path of a file or folder on ADMA",
        ),
        "adma_dest" => (
            "ADMA folder",
            SemanticType::Path,
            "Destination folder on ADMA",
        ),
        "drive_path" => (
            "Drive path",
            SemanticType::Path,
            "Path of a file on Google Drive",
        ),
        "drive_folder" => (
            "Drive folder",
            SemanticType::Path,
            "Folder on Google Drive, / is the root",
        ),
        "adma_url" => ("ADMA url", SemanticType::Url, "Web page on ADMA"),
        "file" => ("File", SemanticType::FileRef, "A downloaded file"),
        "table" => ("Table", SemanticType::Table, "Tabular result"),
        "sensor_data" => (
            "Sensor data",
            SemanticType::Table,
            "Realm5 readings for one day",
        ),
        "google_session" => (
            "Google session",
            SemanticType::Credential,
            "Authenticated Google Drive session",
        ),
        "adma_session" => (
            "ADMA session",
            SemanticType::Credential,
            "Authenticated ADMA session",
        ),
        "field_name" => (
            "Field",
            SemanticType::GeoField,
            "Name of a field on the farm",
        ),
        "field_shape" => (
            "Field shape",
            SemanticType::GeoField,
            "Field with its boundary",
        ),
        other => panic!("no built-in variable {other:?}"),
    };
    VariableSpec::new(id, name, ty, desc)
}

pub(crate) fn entry(spec: ToolSpec, tags: &[&str], doc: &str) -> ToolEntry {
    let mut ids: Vec<&str> = spec.referenced_vars().collect();
    ids.sort_unstable();
    ids.dedup();
    ToolEntry {
        variables: ids.into_iter().map(variable).collect(),
        tags: tags.iter().map(|t| t.to_string()).collect(),
        doc: doc.to_string(),
        spec,
    }
}

/// Variables the input formatter may fill from an instruction.
pub const USER_VARIABLES: [&str; 9] = [
    "menu",
    "date",
    "metrics",
    "keyword",
    "adma_path",
    "adma_dest",
    "drive_path",
    "drive_folder",
    "field_name",
];

/// Descriptors for the built-in tools.
pub fn catalog() -> Vec<ToolEntry> {
    use ToolKind::*;
    let mut user_input = ToolSpec::new(
        "user_input",
        "User input",
        UserInput,
        "Values stated by the user",
    );
    for v in USER_VARIABLES {
        user_input = user_input.output(v);
    }
    vec![
        entry(user_input, &[], "Entry point of every task."),
        entry(
            ToolSpec::new(
                "path_gen",
                "Path generator",
                Transform,
                "Builds /<menu>/<YYYY-MM-DD>.csv",
            )
            .input("menu", "menu")
            .input("date", "date")
            .output("adma_path"),
            &["path", "realm5", "menu", "date"],
            "Generate the ADMA path of the file for a data menu such as Realm5 on a date.",
        ),
        entry(
            ToolSpec::new(
                "url_gen",
                "Url generator",
                ExternalApi,
                "Web page url of an ADMA path",
            )
            .input("path", "adma_path")
            .output("adma_url"),
            &["url", "page", "open", "go", "directory", "folder"],
            "Generate the url of the web page for a file or directory on ADMA.",
        ),
        entry(
            ToolSpec::new(
                "adma_search",
                "ADMA search",
                ExternalApi,
                "Finds the unique file whose name contains the keyword",
            )
            .input("keyword", "keyword")
            .output("adma_path"),
            &[
                "search", "keyword", "name", "contains", "find", "meta", "check",
            ],
            "Search ADMA for the file whose name contains a keyword.",
        ),
        entry(
            ToolSpec::new(
                "adma_metadata",
                "ADMA metadata",
                ExternalApi,
                "Meta data table of an ADMA file",
            )
            .input("path", "adma_path")
            .output("table"),
            &["meta", "metadata", "check", "info"],
            "Read the meta data of a file on ADMA.",
        ),
        entry(
            ToolSpec::new(
                "adma_home",
                "ADMA home",
                ExternalApi,
                "Url of the ADMA home page",
            )
            .output("adma_url"),
            &["home", "start", "main"],
            "Url of the ADMA home page.",
        ),
        entry(
            ToolSpec::new(
                "adma_docs",
                "ADMA documentation",
                ExternalApi,
                "Url of the ADMA documentation",
            )
            .output("adma_url"),
            &[
                "docs",
                "documentation",
                "help",
                "how",
                "use",
                "know",
                "learn",
            ],
            "The documentation page that explains how to use ADMA.",
        ),
        entry(
            ToolSpec::new(
                "adma_auth",
                "ADMA login",
                AuthGate,
                "Authenticates the user on ADMA with a token",
            )
            .output("adma_session")
            .protected("adma"),
            &["token", "auth", "login", "download"],
            "Authenticate the user on ADMA.",
        ),
        entry(
            ToolSpec::new(
                "adma_download",
                "ADMA download",
                ExternalApi,
                "Downloads a file from ADMA",
            )
            .input("path", "adma_path")
            .input("session", "adma_session")
            .output("file")
            .protected("adma"),
            &["download", "file"],
            "Download a file from ADMA.",
        ),
        entry(
            ToolSpec::new(
                "adma_upload",
                "ADMA upload",
                ExternalApi,
                "Uploads a file into an ADMA folder",
            )
            .input("file", "file")
            .input("dest", "adma_dest")
            .output("adma_path")
            .output("adma_url"),
            &["upload", "transfer", "root", "folder"],
            "Upload a file to a folder on ADMA and return its page.",
        ),
        entry(
            ToolSpec::new(
                "gdrive_auth",
                "Google Drive login",
                AuthGate,
                "Authenticates the user for Google Drive",
            )
            .output("google_session")
            .protected("google"),
            &["google", "drive", "auth", "login"],
            "Authenticate the user for Google Drive.",
        ),
        entry(
            ToolSpec::new(
                "gdrive_download",
                "Google Drive download",
                ExternalApi,
                "Downloads a file from Google Drive",
            )
            .input("path", "drive_path")
            .input("session", "google_session")
            .output("file")
            .protected("google"),
            &["google", "drive", "download", "transfer"],
            "Download a file from Google Drive.",
        ),
        entry(
            ToolSpec::new(
                "gdrive_list",
                "Google Drive listing",
                ExternalApi,
                "Lists a Google Drive folder",
            )
            .input("folder", "drive_folder")
            .input("session", "google_session")
            .output("table")
            .protected("google"),
            &["google", "drive", "list", "folder", "root"],
            "List a folder on Google Drive.",
        ),
        entry(
            ToolSpec::new(
                "realm5_fetch",
                "Realm5 weather",
                ExternalApi,
                "Realm5 sensor readings for a date",
            )
            .input("date", "date")
            .output("sensor_data"),
            &[
                "realm5",
                "weather",
                "sensor",
                "temperature",
                "humidity",
                "wind",
                "speed",
            ],
            "Fetch Realm5 weather readings for a date.",
        ),
        entry(
            ToolSpec::new(
                "deere_operations",
                "John Deere operations",
                ExternalApi,
                "Field operations recorded by John Deere equipment",
            )
            .input("date", "date")
            .output("table")
            .protected("john_deere"),
            &["john", "deere", "operations", "equipment"],
            "Field operations from John Deere equipment on a date.",
        ),
        entry(
            ToolSpec::new("open_page", "Open page", UiOutput, "Shows a web page")
                .input("url", "adma_url"),
            &["open", "page", "show"],
            "Display a web page.",
        ),
        entry(
            ToolSpec::new("show_table", "Show table", UiOutput, "Shows a table")
                .input("table", "table"),
            &["table", "show", "list"],
            "Display a table.",
        ),
        entry(
            ToolSpec::new(
                "download_file",
                "Download button",
                UiOutput,
                "Offers a file for download",
            )
            .input("file", "file"),
            &["download", "button"],
            "Pop up a download button for a file.",
        ),
        entry(
            ToolSpec::new(
                "plot_chart",
                "Plot",
                UiOutput,
                "Plots table columns against the first column",
            )
            .input("data", "sensor_data")
            .optional_input("metrics", "metrics")
            .render(RenderKind::PlotSpec),
            &["plot", "chart"],
            "Plot the chosen columns of a table.",
        ),
    ]
}

/// Adapter for every built-in tool that talks to a mock service.
pub struct MockAdapter {
    services: Arc<MockServices>,
}

impl MockAdapter {
    pub fn new(services: Arc<MockServices>) -> Self {
        MockAdapter { services }
    }
}

fn fail(e: impl std::fmt::Display) -> ToolError {
    ToolError::failure(e)
}

impl ToolAdapter for MockAdapter {
    fn execute(&self, call: &ToolCall) -> Result<BTreeMap<String, Value>, ToolError> {
        let s = &self.services;
        let out = match call.spec.id.as_str() {
            "path_gen" => {
                let menu = call.text("menu")?;
                let date = call.date("date")?;
                vec![Value::Path(format!(
                    "/{}/{}.csv",
                    menu.trim_matches('/'),
                    date.iso()
                ))]
            }
            "url_gen" => vec![Value::Url(
                s.adma_page_url(call.text("path")?).map_err(fail)?,
            )],
            "adma_search" => vec![Value::Path(
                s.adma_search(call.text("keyword")?).map_err(fail)?,
            )],
            "adma_metadata" => vec![Value::Table(
                s.adma_metadata(call.text("path")?).map_err(fail)?,
            )],
            "adma_home" => vec![Value::Url(s.adma_home_url())],
            "adma_docs" => vec![Value::Url(s.adma_docs_url())],
            "adma_download" => vec![Value::FileRef(
                s.adma_download(call.text("path")?).map_err(fail)?,
            )],
            "adma_upload" => {
                let path = s
                    .adma_upload(call.file("file")?, call.text("dest")?)
                    .map_err(fail)?;
                let url = s.adma_page_url(&path).map_err(fail)?;
                vec![Value::Path(path), Value::Url(url)]
            }
            "gdrive_download" => vec![Value::FileRef(
                s.drive_download(call.text("path")?).map_err(fail)?,
            )],
            "gdrive_list" => vec![Value::Table(
                s.drive_list(call.text("folder")?).map_err(fail)?,
            )],
            "realm5_fetch" => vec![Value::Table(
                s.realm5_fetch(call.date("date")?).map_err(fail)?,
            )],
            "deere_operations" => vec![Value::Table(
                s.deere_operations(call.date("date")?).map_err(fail)?,
            )],
            other => return Err(ToolError::Failure(format!("no mock for {other}"))),
        };
        call.outputs(out)
    }
}

/// Accepts any non-empty token and marks the session authenticated.
#[derive(Debug, Clone, Copy, Default)]
pub struct AuthGateAdapter;

impl ToolAdapter for AuthGateAdapter {
    fn execute(&self, call: &ToolCall) -> Result<BTreeMap<String, Value>, ToolError> {
        let service = call.spec.protected_service.clone().ok_or_else(|| {
            ToolError::Failure(format!("{}: auth gate without a service", call.spec.id))
        })?;
        match &call.credential {
            Some(slot) if !slot.token().is_empty() => {
                let values = call.spec.outputs.iter().map(|_| Value::Credential {
                    service: service.clone(),
                });
                call.outputs(values)
            }
            _ => Err(ToolError::AuthMissing(service)),
        }
    }
}

pub const MOCK_TOOLS: [&str; 12] = [
    "path_gen",
    "url_gen",
    "adma_search",
    "adma_metadata",
    "adma_home",
    "adma_docs",
    "adma_download",
    "adma_upload",
    "gdrive_download",
    "gdrive_list",
    "realm5_fetch",
    "deere_operations",
];

impl ToolRuntime {
    /// A runtime with adapters for every built-in tool over `services`.
    pub fn with_mock_services(services: Arc<MockServices>) -> Self {
        let rt = ToolRuntime::default();
        rt.register_mock_services(services)
            .expect("fresh runtime has no registrations");
        rt
    }

    pub fn register_mock_services(&self, services: Arc<MockServices>) -> Result<(), ToolError> {
        let adapter: Arc<dyn ToolAdapter> = Arc::new(MockAdapter::new(services));
        for id in MOCK_TOOLS {
            self.register_adapter(AdapterKey::Tool(id.to_string()), adapter.clone())?;
        }
        self.register_adapter(
            AdapterKey::Kind(ToolKind::AuthGate),
            Arc::new(AuthGateAdapter),
        )?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{validate_graph, MetaProgramGraph, Provenance, VariableStore};
    use crate::tools::credentials::{CredentialSlot, Credentials};

    fn full_graph() -> MetaProgramGraph {
        let mut vars: Vec<VariableSpec> = Vec::new();
        let mut tools = Vec::new();
        for e in catalog() {
            for v in e.variables {
                if !vars.contains(&v) {
                    vars.push(v);
                }
            }
            tools.push(e.spec);
        }
        MetaProgramGraph::new(vars, tools)
    }

    #[test]
    fn catalog_forms_a_valid_graph() {
        assert_eq!(validate_graph(&full_graph()), vec![]);
    }

    #[test]
    fn every_mock_tool_is_in_the_catalog() {
        let g = full_graph();
        for id in MOCK_TOOLS {
            assert!(g.tool(id).is_some(), "{id}");
        }
    }

    #[test]
    fn adma_download_yields_file_ref() {
        let dir = tempfile::tempdir().unwrap();
        crate::fixtures::write_bundle(dir.path()).unwrap();
        let services = Arc::new(MockServices::load(dir.path()).unwrap());
        let rt = ToolRuntime::with_mock_services(services);
        let g = full_graph();
        let store = VariableStore::new(&g)
            .bind(
                &g,
                "adma_path",
                Value::Path("/Realm5/2024-05-01.csv".into()),
                Provenance::ToolOutput {
                    tool: "path_gen".into(),
                },
            )
            .unwrap()
            .bind(
                &g,
                "adma_session",
                Value::Credential {
                    service: "adma".into(),
                },
                Provenance::ToolOutput {
                    tool: "adma_auth".into(),
                },
            )
            .unwrap();
        let mut creds = Credentials::new();
        creds.insert(CredentialSlot::new("adma", "t0k"));
        let exec = rt
            .execute_tool(g.tool("adma_download").unwrap(), &store, &creds)
            .unwrap();
        match exec.outputs.get("file") {
            Some(Value::FileRef(f)) => assert_eq!(f.path, "/Realm5/2024-05-01.csv"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn gdrive_list_without_slot_is_auth_missing() {
        let dir = tempfile::tempdir().unwrap();
        crate::fixtures::write_bundle(dir.path()).unwrap();
        let rt = ToolRuntime::with_mock_services(Arc::new(MockServices::load(dir.path()).unwrap()));
        let g = full_graph();
        let store = VariableStore::new(&g)
            .bind(
                &g,
                "drive_folder",
                Value::Path("/".into()),
                Provenance::InputFormatter,
            )
            .unwrap()
            .bind(
                &g,
                "google_session",
                Value::Credential {
                    service: "google".into(),
                },
                Provenance::ToolOutput {
                    tool: "gdrive_auth".into(),
                },
            )
            .unwrap();
        assert_eq!(
            rt.execute_tool(g.tool("gdrive_list").unwrap(), &store, &Credentials::new()),
            Err(ToolError::AuthMissing("google".into()))
        );
    }

    #[test]
    fn auth_gate_marks_session() {
        let spec = ToolSpec::new("gdrive_auth", "g", ToolKind::AuthGate, "")
            .output("google_session")
            .protected("google");
        let call = ToolCall {
            spec,
            args: BTreeMap::new(),
            credential: Some(CredentialSlot::new("google", "abc")),
        };
        let out = AuthGateAdapter.execute(&call).unwrap();
        assert_eq!(
            out["google_session"],
            Value::Credential {
                service: "google".into()
            }
        );
        assert!(!serde_json::to_string(&out).unwrap().contains("abc"));
    }
}
