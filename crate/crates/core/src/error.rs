use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid primitive: {0}")]
    InvalidPrimitive(String),

    #[error("invalid skeleton: {0}")]
    InvalidSkeleton(String),

    #[error("layout mismatch: {0}")]
    Layout(String),

    #[error("sequence too short: need at least {needed} frames, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("invalid filter parameters: {0}")]
    InvalidFilter(String),

    #[error("validation error at `{path}`: {message}")]
    Validation { path: String, message: String },

    #[error("non-finite value in loss term `{term}`")]
    NonFinite { term: &'static str },

    #[error("optimizer failure: {0}")]
    Optimizer(String),

    #[error("malformed prior model: {0}")]
    Prior(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn validation(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Process exit status for this error: 2 for optimizer failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Optimizer(_) | Error::NonFinite { .. } => 2,
            _ => 1,
        }
    }
}
