use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::Json;
use serde::Deserialize;
use serde_json::{json, Value};

use copilot_core::engine::{
    Copilot, EngineConfig, EngineError, ExecutionHistory, Phase, SessionInfo,
};

use crate::{ApiError, AppState};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    #[serde(default)]
    pub config: Option<EngineConfig>,
}

#[derive(Debug, Deserialize)]
pub struct Message {
    pub text: String,
}

#[derive(Debug, Deserialize)]
pub struct Clarification {
    pub variable: String,
    pub value: String,
}

#[derive(Debug, Deserialize)]
pub struct CredentialsBody {
    pub service: String,
    pub token: String,
}

pub async fn healthz() -> Json<Value> {
    Json(json!({"status": "ok"}))
}

pub async fn create_session(
    State(state): State<AppState>,
    body: Bytes,
) -> Result<(StatusCode, Json<Value>), ApiError> {
    // An empty body means default settings.
    let req: CreateSession = if body.iter().all(u8::is_ascii_whitespace) {
        CreateSession::default()
    } else {
        serde_json::from_slice(&body).map_err(|e| ApiError::BadRequest(e.to_string()))?
    };
    let id = state.copilot.create_session(req.config)?;
    Ok((StatusCode::CREATED, Json(json!({ "id": id }))))
}

pub async fn list_sessions(State(state): State<AppState>) -> Json<Vec<String>> {
    Json(state.copilot.session_ids())
}

pub async fn session_info(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<SessionInfo>, ApiError> {
    Ok(Json(state.copilot.info(&id)?))
}

pub async fn trace(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<ExecutionHistory>, ApiError> {
    Ok(Json(state.copilot.get_trace(&id)?))
}

/// Runs a blocking engine call off the async workers.
async fn drive<F>(state: AppState, f: F) -> Result<Json<Phase>, ApiError>
where
    F: FnOnce(&Copilot) -> Result<Phase, EngineError> + Send + 'static,
{
    let copilot = state.copilot.clone();
    let phase = tokio::task::spawn_blocking(move || f(&copilot))
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))??;
    Ok(Json(phase))
}

pub async fn submit_message(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Json(msg): Json<Message>,
) -> Result<Json<Phase>, ApiError> {
    drive(state, move |c| c.submit_instruction(&id, &msg.text)).await
}

pub async fn clarify(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Json(body): Json<Clarification>,
) -> Result<Json<Phase>, ApiError> {
    drive(state, move |c| {
        c.provide_clarification(&id, &body.variable, &body.value)
    })
    .await
}

pub async fn credentials(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Json(body): Json<CredentialsBody>,
) -> Result<Json<Phase>, ApiError> {
    drive(state, move |c| {
        c.provide_credentials(&id, &body.service, &body.token)
    })
    .await
}
