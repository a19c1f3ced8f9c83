use axum::extract::rejection::{JsonRejection, PathRejection};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use serde::{Deserialize, Serialize};

use crate::backend::BackendError;
use crate::feedback::FeedbackError;
use crate::query::QueryError;

/// Error body returned by every endpoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: String,
    pub message: String,
    pub http_status: u16,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            code: code.to_string(),
            message: message.into(),
            http_status: status.as_u16(),
        }
    }

    pub fn status(&self) -> StatusCode {
        StatusCode::from_u16(self.http_status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR)
    }

    pub fn invalid_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "invalid_request", message)
    }

    pub fn unavailable(reason: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "not_initialized", reason)
    }

    pub fn rate_limited(retry_after_secs: u64) -> Self {
        Self::new(
            StatusCode::TOO_MANY_REQUESTS,
            "rate_limited",
            format!("too many generation requests, retry in {retry_after_secs}s"),
        )
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status(), axum::Json(self)).into_response()
    }
}

fn backend_code(err: &BackendError) -> &'static str {
    match err {
        BackendError::Unavailable(_) | BackendError::Timeout(_) | BackendError::Protocol(_) => "backend_unavailable",
    }
}

impl From<&QueryError> for ApiError {
    fn from(err: &QueryError) -> Self {
        let (status, code) = match err {
            QueryError::EmptyQuery => (StatusCode::BAD_REQUEST, "empty_query"),
            QueryError::InvalidK => (StatusCode::BAD_REQUEST, "invalid_k"),
            QueryError::InvalidFilter(_) => (StatusCode::BAD_REQUEST, "invalid_filter"),
            QueryError::EmptyIndex => (StatusCode::INTERNAL_SERVER_ERROR, "empty_index"),
            QueryError::UnknownChunk(_) => (StatusCode::NOT_FOUND, "unknown_chunk"),
            QueryError::NotEnriched(_) => (StatusCode::NOT_FOUND, "not_enriched"),
            QueryError::BackendUnavailable(e) => (StatusCode::BAD_GATEWAY, backend_code(e)),
            QueryError::EmptyBackendResponse => (StatusCode::BAD_GATEWAY, "empty_backend_response"),
            QueryError::Embedding(_) => (StatusCode::BAD_GATEWAY, "embedding_failed"),
            QueryError::IndexMismatch(_) => (StatusCode::INTERNAL_SERVER_ERROR, "index_mismatch"),
            QueryError::Inconsistent(_) => (StatusCode::INTERNAL_SERVER_ERROR, "inconsistent_store"),
            QueryError::Store(_) => (StatusCode::INTERNAL_SERVER_ERROR, "store_error"),
        };
        Self::new(status, code, err.to_string())
    }
}

impl From<QueryError> for ApiError {
    fn from(err: QueryError) -> Self {
        Self::from(&err)
    }
}

impl From<&FeedbackError> for ApiError {
    fn from(err: &FeedbackError) -> Self {
        let (status, code) = match err {
            FeedbackError::UnknownChunk(_) => (StatusCode::NOT_FOUND, "unknown_chunk"),
            FeedbackError::EmptyQuery => (StatusCode::BAD_REQUEST, "empty_query"),
            FeedbackError::Store(_) => (StatusCode::INTERNAL_SERVER_ERROR, "store_error"),
        };
        Self::new(status, code, err.to_string())
    }
}

impl From<FeedbackError> for ApiError {
    fn from(err: FeedbackError) -> Self {
        Self::from(&err)
    }
}

impl From<JsonRejection> for ApiError {
    fn from(rejection: JsonRejection) -> Self {
        Self::invalid_request(rejection.body_text())
    }
}

impl From<PathRejection> for ApiError {
    fn from(rejection: PathRejection) -> Self {
        Self::invalid_request(rejection.body_text())
    }
}
