//! Service errors and their JSON responses.

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, ServiceError>;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("experiment {0} not found")]
    NotFound(String),

    #[error("invalid request: {0}")]
    InvalidArgument(String),

    /// The request is well formed but not allowed in the current state,
    /// e.g. a vote on a pair that was never assigned.
    #[error("conflict: {0}")]
    Conflict(String),

    #[error("storage failure: {0}")]
    Storage(#[from] std::io::Error),

    #[error("corrupt experiment data: {0}")]
    Corrupt(String),

    #[error(transparent)]
    Model(#[from] hybrid_mst::Error),
}

impl ServiceError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        ServiceError::InvalidArgument(msg.into())
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
            ServiceError::InvalidArgument(_) | ServiceError::Model(hybrid_mst::Error::InvalidArgument(_)) => {
                StatusCode::BAD_REQUEST
            }
            ServiceError::Conflict(_) => StatusCode::CONFLICT,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            ServiceError::NotFound(_) => "not_found",
            ServiceError::InvalidArgument(_) | ServiceError::Model(hybrid_mst::Error::InvalidArgument(_)) => {
                "invalid_argument"
            }
            ServiceError::Conflict(_) => "conflict",
            _ => "internal",
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = self.status();
        if status.is_server_error() {
            tracing::error!(error = %self, "request failed");
        }
        (
            status,
            Json(json!({ "error": self.kind(), "message": self.to_string() })),
        )
            .into_response()
    }
}
