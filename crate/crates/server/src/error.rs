use std::fmt;

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use haptic_core::agent::AgentError;
use haptic_core::ingestion::IngestError;
use haptic_core::providers::ProviderError;
use haptic_core::retrieval::RetrievalError;
use haptic_core::schema::SchemaError;
use haptic_core::StoreError;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    BadRequest,
    NotFound,
    Conflict,
    ProviderUnavailable,
    Internal,
}

impl ErrorCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::BadRequest => "bad_request",
            ErrorCode::NotFound => "not_found",
            ErrorCode::Conflict => "conflict",
            ErrorCode::ProviderUnavailable => "provider_unavailable",
            ErrorCode::Internal => "internal",
        }
    }

    pub fn status(self) -> StatusCode {
        match self {
            ErrorCode::BadRequest => StatusCode::BAD_REQUEST,
            ErrorCode::NotFound => StatusCode::NOT_FOUND,
            ErrorCode::Conflict => StatusCode::CONFLICT,
            ErrorCode::ProviderUnavailable => StatusCode::SERVICE_UNAVAILABLE,
            ErrorCode::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

/// The error body of every failed request and the message of every failed
/// CLI command. Only provider outages are worth retrying.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
    pub retryable: bool,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
            retryable: code == ErrorCode::ProviderUnavailable,
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::BadRequest, message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::NotFound, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::Internal, message)
    }
}

impl fmt::Display for ApiError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code.as_str(), self.message)?;
        if self.retryable {
            f.write_str(" (retryable)")?;
        }
        Ok(())
    }
}

impl std::error::Error for ApiError {}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.code.status(), Json(self)).into_response()
    }
}

fn provider_code(p: &ProviderError) -> ErrorCode {
    if p.is_retryable() {
        ErrorCode::ProviderUnavailable
    } else {
        ErrorCode::Internal
    }
}

fn store_code(e: &StoreError) -> ErrorCode {
    match e {
        StoreError::NotFound(_) => ErrorCode::NotFound,
        StoreError::Io { .. } => ErrorCode::Internal,
        _ => ErrorCode::BadRequest,
    }
}

impl From<ProviderError> for ApiError {
    fn from(e: ProviderError) -> Self {
        Self::new(provider_code(&e), e.to_string())
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        Self::new(store_code(&e), e.to_string())
    }
}

impl From<SchemaError> for ApiError {
    fn from(e: SchemaError) -> Self {
        Self::bad_request(e.to_string())
    }
}

fn retrieval_code(r: &RetrievalError) -> ErrorCode {
    match r {
        RetrievalError::EmptyPrompt | RetrievalError::InvalidSessionId(_) => ErrorCode::BadRequest,
        RetrievalError::Provider(p) => provider_code(p),
        // the agent only reads the catalog, so a store failure is ours
        RetrievalError::Store(_) | RetrievalError::Session(_) => ErrorCode::Internal,
    }
}

impl From<RetrievalError> for ApiError {
    fn from(e: RetrievalError) -> Self {
        Self::new(retrieval_code(&e), e.to_string())
    }
}

impl From<AgentError> for ApiError {
    fn from(e: AgentError) -> Self {
        let code = match &e {
            AgentError::Retrieval(r) => retrieval_code(r),
            AgentError::Provider(p) => provider_code(p),
            AgentError::UnknownSession(_) => ErrorCode::NotFound,
            AgentError::Schema(_) => ErrorCode::BadRequest,
            AgentError::Store(_)
            | AgentError::Rerank(_)
            | AgentError::Template(_)
            | AgentError::Inconsistent(_) => ErrorCode::Internal,
        };
        Self::new(code, e.to_string())
    }
}

impl From<IngestError> for ApiError {
    fn from(e: IngestError) -> Self {
        let code = match &e {
            IngestError::Document { .. } | IngestError::NoTextBlocks | IngestError::Schema(_) => {
                ErrorCode::BadRequest
            }
            IngestError::Provider(p) => provider_code(p),
            IngestError::Store(s) => store_code(s),
            IngestError::UnknownReview(_) => ErrorCode::NotFound,
            IngestError::AlreadyResolved(_) | IngestError::NotReviewed(_) => ErrorCode::Conflict,
            IngestError::EmptySummary | IngestError::Io(_) => ErrorCode::Internal,
        };
        Self::new(code, e.to_string())
    }
}
