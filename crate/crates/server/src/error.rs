use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;

use copilot_core::engine::EngineError;
use copilot_core::tools::MockError;

/// Error body: the engine error's own JSON (tagged by `code`) plus a
/// human-readable `message`.
#[derive(Debug)]
pub enum ApiError {
    Engine(EngineError),
    Mock(MockError),
    BadRequest(String),
    Internal(String),
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        ApiError::Engine(e)
    }
}

impl From<MockError> for ApiError {
    fn from(e: MockError) -> Self {
        ApiError::Mock(e)
    }
}

fn engine_status(e: &EngineError) -> StatusCode {
    match e {
        EngineError::UnknownSession { .. } => StatusCode::NOT_FOUND,
        EngineError::WrongPhase { .. } => StatusCode::CONFLICT,
        EngineError::ConfigInvalid { .. }
        | EngineError::UnknownVariable { .. }
        | EngineError::EmptyToken
        | EngineError::InvalidValue { .. } => StatusCode::UNPROCESSABLE_ENTITY,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, body) = match self {
            ApiError::Engine(e) => {
                let mut body = serde_json::to_value(&e).unwrap_or_else(|_| json!({}));
                body["message"] = json!(e.to_string());
                (engine_status(&e), body)
            }
            ApiError::Mock(e) => {
                let (status, code) = match &e {
                    MockError::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
                    MockError::AmbiguousMatch { .. } => (StatusCode::CONFLICT, "ambiguous_match"),
                    MockError::Invalid(_) => (StatusCode::BAD_REQUEST, "invalid"),
                    MockError::Fixture(_) => (StatusCode::INTERNAL_SERVER_ERROR, "fixture"),
                };
                (status, json!({"code": code, "message": e.to_string()}))
            }
            ApiError::BadRequest(m) => (
                StatusCode::BAD_REQUEST,
                json!({"code": "bad_request", "message": m}),
            ),
            ApiError::Internal(m) => (
                StatusCode::INTERNAL_SERVER_ERROR,
                json!({"code": "internal", "message": m}),
            ),
        };
        (status, Json(body)).into_response()
    }
}
