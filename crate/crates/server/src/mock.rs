//! The mock services over HTTP. Operation names double as URL paths, and a
//! few HTML pages stand in for the data platform's web UI.

use axum::extract::{Path, Query, State};
use axum::http::header;
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value as JsonValue};

use copilot_core::graph::{FileRef, SemanticType, Table, Value};
use copilot_core::tools::MockError;

use crate::{ApiError, AppState};

#[derive(Deserialize)]
struct PathQ {
    path: String,
}

#[derive(Deserialize)]
struct FolderQ {
    #[serde(default)]
    folder: String,
}

#[derive(Deserialize)]
struct KeywordQ {
    keyword: String,
}

#[derive(Deserialize)]
struct DateQ {
    date: String,
}

#[derive(Deserialize)]
struct FieldQ {
    name: String,
}

#[derive(Deserialize)]
struct Upload {
    file: FileRef,
    dest: String,
}

#[derive(Deserialize)]
struct PlotReq {
    table: Table,
    metrics: String,
}

pub fn routes() -> Router<AppState> {
    Router::new()
        .route("/drive_download", get(drive_download))
        .route("/drive_list", get(drive_list))
        .route("/adma_upload", post(adma_upload))
        .route("/adma_page_url", get(adma_page_url))
        .route("/adma_metadata", get(adma_metadata))
        .route("/adma_search", get(adma_search))
        .route("/adma_download", get(adma_download))
        .route("/adma_list", get(adma_list))
        .route("/realm5_fetch", get(realm5_fetch))
        .route("/plot", post(plot))
        .route("/field_boundary", get(field_boundary))
        .route("/file_content", get(file_content))
        .route("/reset", post(reset))
}

pub fn pages() -> Router<AppState> {
    Router::new()
        .route("/", get(home))
        .route("/docs", get(docs))
        .route("/files", get(root_page))
        .route("/files/", get(root_page))
        .route("/files/{*path}", get(file_page))
}

async fn drive_download(
    State(s): State<AppState>,
    Query(q): Query<PathQ>,
) -> Result<Json<FileRef>, ApiError> {
    Ok(Json(s.services.drive_download(&q.path)?))
}

async fn drive_list(
    State(s): State<AppState>,
    Query(q): Query<FolderQ>,
) -> Result<Json<Table>, ApiError> {
    Ok(Json(s.services.drive_list(&q.folder)?))
}

async fn adma_upload(
    State(s): State<AppState>,
    Json(u): Json<Upload>,
) -> Result<Json<JsonValue>, ApiError> {
    let path = s.services.adma_upload(&u.file, &u.dest)?;
    Ok(Json(json!({ "path": path })))
}

async fn adma_page_url(
    State(s): State<AppState>,
    Query(q): Query<PathQ>,
) -> Result<Json<JsonValue>, ApiError> {
    Ok(Json(json!({ "url": s.services.adma_page_url(&q.path)? })))
}

async fn adma_metadata(
    State(s): State<AppState>,
    Query(q): Query<PathQ>,
) -> Result<Json<Table>, ApiError> {
    Ok(Json(s.services.adma_metadata(&q.path)?))
}

async fn adma_search(
    State(s): State<AppState>,
    Query(q): Query<KeywordQ>,
) -> Result<Json<JsonValue>, ApiError> {
    Ok(Json(json!({ "path": s.services.adma_search(&q.keyword)? })))
}

async fn adma_download(
    State(s): State<AppState>,
    Query(q): Query<PathQ>,
) -> Result<Json<FileRef>, ApiError> {
    Ok(Json(s.services.adma_download(&q.path)?))
}

async fn adma_list(
    State(s): State<AppState>,
    Query(q): Query<FolderQ>,
) -> Result<Json<Table>, ApiError> {
    Ok(Json(s.services.adma_list(&q.folder)?))
}

async fn realm5_fetch(
    State(s): State<AppState>,
    Query(q): Query<DateQ>,
) -> Result<Json<Table>, ApiError> {
    let date = match Value::coerce(SemanticType::Date, &q.date) {
        Ok(Value::Date(d)) => d,
        Ok(_) => return Err(ApiError::BadRequest("not a date".into())),
        Err(e) => return Err(ApiError::BadRequest(e.to_string())),
    };
    Ok(Json(s.services.realm5_fetch(&date)?))
}

async fn plot(State(s): State<AppState>, Json(p): Json<PlotReq>) -> Result<Response, ApiError> {
    Ok(Json(s.services.plot(&p.table, &p.metrics)?).into_response())
}

async fn field_boundary(
    State(s): State<AppState>,
    Query(q): Query<FieldQ>,
) -> Result<Response, ApiError> {
    Ok(Json(s.services.field_boundary(&q.name)?).into_response())
}

/// Raw bytes behind a file handle, as fetched by download buttons.
async fn file_content(
    State(s): State<AppState>,
    Query(file): Query<FileRef>,
) -> Result<Response, ApiError> {
    let bytes = s.services.file_content(&file)?;
    let disposition = format!(
        "attachment; filename=\"{}\"",
        file.file_name().replace('"', "")
    );
    Ok((
        [
            (header::CONTENT_TYPE, "application/octet-stream".to_string()),
            (header::CONTENT_DISPOSITION, disposition),
        ],
        bytes,
    )
        .into_response())
}

async fn reset(State(s): State<AppState>) -> Json<JsonValue> {
    s.services.reset();
    Json(json!({ "status": "reset" }))
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn page(title: &str, body: &str) -> Html<String> {
    let title = escape(title);
    Html(format!(
        "<!doctype html>\n<html><head><meta charset=\"utf-8\"><title>{title}</title></head>\n<body><h1>{title}</h1>\n{body}</body></html>\n"
    ))
}

fn table_html(table: &Table) -> String {
    let mut out = String::from("<table>\n<tr>");
    for c in &table.columns {
        out.push_str(&format!("<th>{}</th>", escape(c)));
    }
    out.push_str("</tr>\n");
    for row in &table.rows {
        out.push_str("<tr>");
        for cell in row {
            out.push_str(&format!("<td>{}</td>", escape(cell)));
        }
        out.push_str("</tr>\n");
    }
    out.push_str("</table>\n");
    out
}

async fn home(State(s): State<AppState>) -> Html<String> {
    let base = escape(s.services.base_url());
    page(
        "ADMA",
        &format!("<p><a href=\"{base}/files/\">Browse files</a> | <a href=\"{base}/docs\">Documentation</a></p>\n"),
    )
}

async fn docs() -> Html<String> {
    page(
        "Using ADMA",
        "<p>Files live in a tree under your root folder. Open a folder to list it, open a file to see its \
         metadata and contents. Uploads go to an existing folder; a file of the same name is replaced.</p>\n",
    )
}

async fn root_page(state: State<AppState>) -> Result<Html<String>, ApiError> {
    file_page(state, Path(String::new())).await
}

async fn file_page(
    State(s): State<AppState>,
    Path(path): Path<String>,
) -> Result<Html<String>, ApiError> {
    let services = &s.services;
    match services.adma_list(&path) {
        Ok(listing) => return Ok(page(&format!("Folder /{path}"), &table_html(&listing))),
        Err(MockError::NotFound(_)) => {}
        Err(e) => return Err(e.into()),
    }
    let meta = services.adma_metadata(&path)?;
    let file = services.adma_download(&path)?;
    let content = services.file_content(&file)?;
    let mut body = table_html(&meta);
    body.push_str(&format!(
        "<pre>{}</pre>\n",
        escape(&String::from_utf8_lossy(&content))
    ));
    Ok(page(&format!("File /{path}"), &body))
}
