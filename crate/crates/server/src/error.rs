use axum::extract::multipart::MultipartError;
use axum::extract::rejection::{JsonRejection, PathRejection, QueryRejection};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use icls_core::domain::DomainError;
use icls_core::gamification::GamificationError;
use icls_core::llm::LlmError;
use icls_core::scribe::ScribeError;
use icls_core::worldwise::QuizError;
use serde_json::json;

use crate::db::DbError;

/// An error response: `{"error": {"code", "message"}}` with a matching status.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
        }
    }

    pub fn unauthorized(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNAUTHORIZED, "unauthenticated", message)
    }

    pub fn forbidden(message: impl Into<String>) -> Self {
        Self::new(StatusCode::FORBIDDEN, "forbidden", message)
    }

    pub fn not_found(what: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not-found", what)
    }

    pub fn conflict(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::CONFLICT, code, message)
    }

    pub fn invalid(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, code, message)
    }

    pub fn upstream(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_GATEWAY, "llm-unavailable", message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} {}: {}", self.status.as_u16(), self.code, self.message)
    }
}

impl std::error::Error for ApiError {}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.status.is_server_error() {
            tracing::error!(code = self.code, "{}", self.message);
        }
        let body = json!({ "error": { "code": self.code, "message": self.message } });
        (self.status, Json(body)).into_response()
    }
}

impl From<DomainError> for ApiError {
    fn from(e: DomainError) -> Self {
        let message = e.to_string();
        match e {
            DomainError::DuplicateEmail => ApiError::conflict("duplicate-email", message),
            DomainError::InvalidField { .. } => ApiError::invalid("invalid-field", message),
            DomainError::UnknownCategoryName(_) => ApiError::invalid("unknown-category", message),
            DomainError::UnknownLearner(_) | DomainError::UnknownCountry(_) | DomainError::UnknownUnit(_) => {
                ApiError::not_found(message)
            }
            DomainError::SkippedRung { .. } => ApiError::conflict("skipped-rung", message),
            DomainError::RegressionAttempt { .. } => ApiError::conflict("already-reached", message),
        }
    }
}

impl From<GamificationError> for ApiError {
    fn from(e: GamificationError) -> Self {
        let message = e.to_string();
        match e {
            GamificationError::DuplicateAward { .. } => ApiError::conflict("duplicate-award", message),
            GamificationError::AlreadyClaimed(_) => ApiError::conflict("already-claimed", message),
            GamificationError::ChallengeNotCompleted(_) => ApiError::conflict("challenge-not-completed", message),
            GamificationError::LearnerExists(_) => ApiError::conflict("learner-exists", message),
            GamificationError::UnknownLearner(_) => ApiError::not_found(message),
            GamificationError::NoTier(_)
            | GamificationError::UnknownScope(_)
            | GamificationError::MissingScopeSubject(_) => ApiError::invalid("invalid-query", message),
            GamificationError::Inconsistent { .. } => ApiError::internal(message),
        }
    }
}

impl From<DbError> for ApiError {
    fn from(e: DbError) -> Self {
        if e.is_constraint() {
            ApiError::conflict("integrity-violation", e.to_string())
        } else {
            ApiError::internal(e.to_string())
        }
    }
}

impl From<LlmError> for ApiError {
    fn from(e: LlmError) -> Self {
        match e {
            LlmError::Template(_) | LlmError::InvalidRequest(_) | LlmError::ContextOverflow { .. } => {
                ApiError::invalid("invalid-prompt", e.to_string())
            }
            other => ApiError::upstream(other.to_string()),
        }
    }
}

impl From<QuizError> for ApiError {
    fn from(e: QuizError) -> Self {
        match e {
            QuizError::Llm(inner) => inner.into(),
            QuizError::Underfull { .. } | QuizError::InvalidQuestion(_) => ApiError::upstream(e.to_string()),
            other => ApiError::invalid("invalid-submission", other.to_string()),
        }
    }
}

impl From<ScribeError> for ApiError {
    fn from(e: ScribeError) -> Self {
        match e {
            ScribeError::Llm(inner) => inner.into(),
            ScribeError::UnitNotIndexed(_) => ApiError::conflict("unit-not-indexed", e.to_string()),
            other => ApiError::invalid("invalid-question", other.to_string()),
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::invalid("invalid-body", e.body_text())
    }
}

impl From<PathRejection> for ApiError {
    fn from(e: PathRejection) -> Self {
        ApiError::not_found(e.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(e: QueryRejection) -> Self {
        ApiError::invalid("invalid-query", e.body_text())
    }
}

impl From<MultipartError> for ApiError {
    fn from(e: MultipartError) -> Self {
        ApiError::invalid("invalid-multipart", e.body_text())
    }
}
