use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;

use crate::API_VERSION;

/// Failure to start or run the service.
#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Core(#[from] radioplan_core::Error),
}

/// An HTTP error carrying a JSON body `{"v", "error": {"kind", "message"}}`.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub kind: &'static str,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, kind: &'static str, message: impl Into<String>) -> Self {
        Self { status, kind, message: message.into() }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "schema", message)
    }

    pub fn not_found(what: &str, id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", format!("unknown {what} `{id}`"))
    }

    pub fn conflict(message: impl Into<String>) -> Self {
        Self::new(StatusCode::CONFLICT, "conflict", message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

/// Library errors raised while handling a request.
impl From<radioplan_core::Error> for ApiError {
    fn from(e: radioplan_core::Error) -> Self {
        use radioplan_core::Error as E;
        let status = match &e {
            E::Parse(_) | E::Validation { .. } | E::GridMismatch | E::LengthMismatch(..) => StatusCode::BAD_REQUEST,
            E::ZeroQuaternion | E::RepresentationMismatch | E::UnknownMode(_) => StatusCode::BAD_REQUEST,
            E::EmptyRegion | E::DegenerateRegion(_) | E::ZeroWeights | E::HeightOutOfBounds(_) | E::EmptySelection => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, e.kind(), e.to_string())
    }
}

impl From<std::io::Error> for ApiError {
    fn from(e: std::io::Error) -> Self {
        Self::internal(e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "v": API_VERSION, "error": { "kind": self.kind, "message": self.message } });
        (self.status, Json(body)).into_response()
    }
}
