use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use serde::Serialize;
use thiserror::Error;

use crate::schema::SCHEMA_VERSION;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    InvalidPayload,
    PayloadTooLarge,
    NotFound,
    Finalized,
    Engine,
    Internal,
}

#[derive(Clone, Debug, Error, PartialEq, Eq, Serialize)]
#[error("{message}")]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
    /// Field path of the offending input, e.g. `data.pvalues[3]`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
}

impl ApiError {
    pub fn invalid(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            code: ErrorCode::InvalidPayload,
            message: message.into(),
            path: Some(path.into()),
        }
    }

    pub fn too_large(n: usize, max: usize) -> Self {
        Self {
            code: ErrorCode::PayloadTooLarge,
            message: format!("{n} hypotheses exceed the limit of {max}"),
            path: Some("data.pvalues".into()),
        }
    }

    pub fn not_found(id: &str) -> Self {
        Self {
            code: ErrorCode::NotFound,
            message: format!("no session `{id}`"),
            path: None,
        }
    }

    pub fn finalized() -> Self {
        Self {
            code: ErrorCode::Finalized,
            message: "session is finalized".into(),
            path: None,
        }
    }

    pub fn engine(e: adapt_core::AdaptError) -> Self {
        Self {
            code: ErrorCode::Engine,
            message: e.to_string(),
            path: None,
        }
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self {
            code: ErrorCode::Internal,
            message: message.into(),
            path: None,
        }
    }

    pub fn status(&self) -> StatusCode {
        match self.code {
            ErrorCode::InvalidPayload => StatusCode::UNPROCESSABLE_ENTITY,
            ErrorCode::PayloadTooLarge => StatusCode::PAYLOAD_TOO_LARGE,
            ErrorCode::NotFound => StatusCode::NOT_FOUND,
            ErrorCode::Finalized => StatusCode::CONFLICT,
            ErrorCode::Engine => StatusCode::UNPROCESSABLE_ENTITY,
            ErrorCode::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    schema: u32,
    error: &'a ApiError,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = serde_json::to_vec(&ErrorBody {
            schema: SCHEMA_VERSION,
            error: &self,
        })
        .unwrap_or_default();
        (self.status(), [(axum::http::header::CONTENT_TYPE, "application/json")], body).into_response()
    }
}
