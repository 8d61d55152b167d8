use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;

use robodiary_core::emotion::ClassifierError;
use robodiary_core::memory::MemoryError;
use robodiary_core::recorder::RecordError;
use robodiary_core::{PipelineError, Stage};

#[derive(Debug, Serialize)]
struct Body {
    error: Detail,
}

#[derive(Debug, Serialize)]
struct Detail {
    kind: &'static str,
    message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    stage: Option<Stage>,
}

/// An error as the API reports it: a status code and a JSON body
/// `{"error": {"kind", "message", "stage"?}}`.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub kind: &'static str,
    pub message: String,
    pub stage: Option<Stage>,
}

impl ApiError {
    pub fn new(status: StatusCode, kind: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            kind,
            message: message.into(),
            stage: None,
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "validation", message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, "not_found", message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.status.is_server_error() {
            tracing::error!(kind = self.kind, "{}", self.message);
        }
        let body = Body {
            error: Detail {
                kind: self.kind,
                message: self.message,
                stage: self.stage,
            },
        };
        (self.status, Json(body)).into_response()
    }
}

impl From<MemoryError> for ApiError {
    fn from(e: MemoryError) -> Self {
        let message = e.to_string();
        match e {
            MemoryError::Validation { .. } => ApiError::bad_request(message),
            MemoryError::Conflict(_) => ApiError::new(StatusCode::CONFLICT, "conflict", message),
            MemoryError::Closed => ApiError::new(StatusCode::CONFLICT, "session_closed", message),
            MemoryError::NotFound(_) => ApiError::not_found(message),
            MemoryError::Parse { .. }
            | MemoryError::Schema { .. }
            | MemoryError::Invalid(_)
            | MemoryError::MissingImages(_) => {
                ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_folder", message)
            }
            MemoryError::Io { .. } => ApiError::internal(message),
        }
    }
}

impl From<ClassifierError> for ApiError {
    fn from(e: ClassifierError) -> Self {
        match e {
            ClassifierError::EmptyMessage | ClassifierError::UnknownIntent(_) => {
                ApiError::bad_request(e.to_string())
            }
            ClassifierError::Config(_) => ApiError::internal(e.to_string()),
        }
    }
}

impl From<RecordError> for ApiError {
    fn from(e: RecordError) -> Self {
        match e {
            RecordError::Memory(e) => e.into(),
            RecordError::Classifier(e) => e.into(),
        }
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        let stage = e.stage();
        let mut api = match e {
            PipelineError::Memory(e) => e.into(),
            PipelineError::Invalid { .. } => ApiError::bad_request(e.to_string()),
            PipelineError::Provider { .. } | PipelineError::Generation { .. } => {
                ApiError::new(StatusCode::BAD_GATEWAY, "provider", e.to_string())
            }
        };
        api.stage = stage;
        api
    }
}
