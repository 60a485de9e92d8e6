use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;

#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error("engine not initialized: ingest a knowledge base first")]
    NotReady,
    #[error("unknown session {0:?}")]
    UnknownSession(String),
    #[error("session {0:?} is already processing a message")]
    Busy(String),
    #[error("session {0:?} is waiting for a wizard decision")]
    AwaitingWizard(String),
    #[error("no pending proposal for session {session:?} at turn {turn}")]
    StaleTurn { session: String, turn: usize },
    #[error("turn {turn} does not exist in session {session:?}")]
    UnknownTurn { session: String, turn: usize },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Core(#[from] convsearch_core::Error),
    #[error("log write failed: {0}")]
    Io(#[from] std::io::Error),
}

impl ApiError {
    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::NotReady => StatusCode::SERVICE_UNAVAILABLE,
            ApiError::UnknownSession(_) | ApiError::UnknownTurn { .. } => StatusCode::NOT_FOUND,
            ApiError::Busy(_) | ApiError::AwaitingWizard(_) | ApiError::StaleTurn { .. } => StatusCode::CONFLICT,
            ApiError::Invalid(_) => StatusCode::BAD_REQUEST,
            ApiError::Core(convsearch_core::Error::Io(_)) | ApiError::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
            ApiError::Core(_) => StatusCode::UNPROCESSABLE_ENTITY,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = self.status();
        let body = Json(json!({ "error": self.to_string(), "status": status.as_u16() }));
        match self {
            ApiError::Busy(_) => (status, [(header::RETRY_AFTER, "1")], body).into_response(),
            _ => (status, body).into_response(),
        }
    }
}

pub type ApiResult<T> = Result<T, ApiError>;
