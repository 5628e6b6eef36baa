use std::fmt;

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    ParseError,
    NoMatch,
    UnknownStyle,
    BackendError,
    NotFound,
    Conflict,
}

impl ErrorCode {
    pub const ALL: [ErrorCode; 6] = [
        ErrorCode::ParseError,
        ErrorCode::NoMatch,
        ErrorCode::UnknownStyle,
        ErrorCode::BackendError,
        ErrorCode::NotFound,
        ErrorCode::Conflict,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::ParseError => "parse_error",
            ErrorCode::NoMatch => "no_match",
            ErrorCode::UnknownStyle => "unknown_style",
            ErrorCode::BackendError => "backend_error",
            ErrorCode::NotFound => "not_found",
            ErrorCode::Conflict => "conflict",
        }
    }

    pub fn status(self) -> StatusCode {
        match self {
            ErrorCode::ParseError | ErrorCode::UnknownStyle => StatusCode::UNPROCESSABLE_ENTITY,
            ErrorCode::NoMatch => StatusCode::OK,
            ErrorCode::BackendError => StatusCode::BAD_GATEWAY,
            ErrorCode::NotFound => StatusCode::NOT_FOUND,
            ErrorCode::Conflict => StatusCode::CONFLICT,
        }
    }

    /// Process exit status used by the CLI.
    pub fn exit_code(self) -> u8 {
        match self {
            ErrorCode::NotFound => 2,
            ErrorCode::NoMatch => 3,
            ErrorCode::BackendError => 4,
            ErrorCode::ParseError => 5,
            ErrorCode::UnknownStyle => 6,
            ErrorCode::Conflict => 7,
        }
    }
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("{code}: {message}")]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub locus: Option<String>,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        ApiError { code, message: message.into(), locus: None }
    }

    pub fn at(mut self, locus: impl Into<String>) -> Self {
        self.locus = Some(locus.into());
        self
    }

    pub fn parse(message: impl Into<String>) -> Self {
        ApiError::new(ErrorCode::ParseError, message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        ApiError::new(ErrorCode::NotFound, message)
    }

    pub fn conflict(message: impl Into<String>) -> Self {
        ApiError::new(ErrorCode::Conflict, message)
    }

    pub fn backend(message: impl Into<String>) -> Self {
        ApiError::new(ErrorCode::BackendError, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.code.status(), Json(self)).into_response()
    }
}
