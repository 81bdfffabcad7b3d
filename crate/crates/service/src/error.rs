use serde::Serialize;
use thiserror::Error;

/// Stable machine-readable error codes, shared by HTTP responses and CLI output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ErrorCode {
    NotFound,
    Conflict,
    Forbidden,
    Unauthenticated,
    ConsentRequired,
    SyncIncomplete,
    Validation,
    OtpInvalid,
    OtpLocked,
    Internal,
}

impl ErrorCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::NotFound => "NOT_FOUND",
            ErrorCode::Conflict => "CONFLICT",
            ErrorCode::Forbidden => "FORBIDDEN",
            ErrorCode::Unauthenticated => "UNAUTHENTICATED",
            ErrorCode::ConsentRequired => "CONSENT_REQUIRED",
            ErrorCode::SyncIncomplete => "SYNC_INCOMPLETE",
            ErrorCode::Validation => "VALIDATION",
            ErrorCode::OtpInvalid => "OTP_INVALID",
            ErrorCode::OtpLocked => "OTP_LOCKED",
            ErrorCode::Internal => "INTERNAL",
        }
    }
}

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("{0} not found")]
    NotFound(String),
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("forbidden: {0}")]
    Forbidden(String),
    #[error("missing or malformed actor")]
    Unauthenticated,
    #[error("driver {0} has not opted in to share data with the organization")]
    ConsentRequired(String),
    #[error("account sync incomplete ({0}); set use_fallback or override to proceed")]
    SyncIncomplete(String),
    #[error("validation: {0}")]
    Validation(String),
    #[error("wrong verification code, {remaining} attempts left")]
    OtpInvalid { remaining: u32 },
    #[error("verification locked after too many attempts; enroll again")]
    OtpLocked,
    #[error("internal: {0}")]
    Internal(String),
}

impl ServiceError {
    pub fn code(&self) -> ErrorCode {
        match self {
            ServiceError::NotFound(_) => ErrorCode::NotFound,
            ServiceError::Conflict(_) => ErrorCode::Conflict,
            ServiceError::Forbidden(_) => ErrorCode::Forbidden,
            ServiceError::Unauthenticated => ErrorCode::Unauthenticated,
            ServiceError::ConsentRequired(_) => ErrorCode::ConsentRequired,
            ServiceError::SyncIncomplete(_) => ErrorCode::SyncIncomplete,
            ServiceError::Validation(_) => ErrorCode::Validation,
            ServiceError::OtpInvalid { .. } => ErrorCode::OtpInvalid,
            ServiceError::OtpLocked => ErrorCode::OtpLocked,
            ServiceError::Internal(_) => ErrorCode::Internal,
        }
    }
}

impl From<rusqlite::Error> for ServiceError {
    fn from(e: rusqlite::Error) -> Self {
        ServiceError::Internal(format!("store: {e}"))
    }
}

impl From<lostwage_core::EngineError> for ServiceError {
    fn from(e: lostwage_core::EngineError) -> Self {
        ServiceError::Validation(e.to_string())
    }
}

impl From<lostwage_report::ReportError> for ServiceError {
    fn from(e: lostwage_report::ReportError) -> Self {
        ServiceError::Internal(e.to_string())
    }
}

pub type ServiceResult<T> = Result<T, ServiceError>;
