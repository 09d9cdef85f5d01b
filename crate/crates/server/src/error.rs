use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use cornerrag_core::pipeline::StagedError;
use cornerrag_core::Error;
use serde::{Deserialize, Serialize};

/// Wire shape of every error response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub stage: String,
    pub message: String,
    pub retriable: bool,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, stage: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorBody {
                stage: stage.to_string(),
                message: message.into(),
                retriable: false,
            },
        }
    }

    pub fn bad_request(stage: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, stage, message)
    }

    pub fn internal(stage: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, stage, message)
    }

    /// Maps a library error raised during `stage` onto a status code.
    pub fn from_core(stage: &str, e: Error) -> Self {
        let status = match &e {
            Error::Precondition(_) | Error::DegenerateInput(_) => StatusCode::BAD_REQUEST,
            Error::NotFound(_) => StatusCode::NOT_FOUND,
            Error::EmptyStore => StatusCode::CONFLICT,
            Error::Transport { .. } | Error::Data(_) | Error::EmptyOutput => StatusCode::BAD_GATEWAY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self {
            status,
            body: ErrorBody {
                stage: stage.to_string(),
                message: e.to_string(),
                retriable: e.is_retriable(),
            },
        }
    }
}

impl From<StagedError> for ApiError {
    fn from(e: StagedError) -> Self {
        Self::from_core(e.stage.as_str(), e.error)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

pub type ApiResult<T> = Result<T, ApiError>;
