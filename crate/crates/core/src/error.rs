use thiserror::Error;

/// Errors raised by the controllers, the tabular world and the run harness.
#[derive(Debug, Error)]
pub enum GdroError {
    #[error("unknown identifier: {0}")]
    Lookup(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = GdroError> = std::result::Result<T, E>;

pub(crate) fn argument(message: impl Into<String>) -> GdroError {
    GdroError::Argument(message.into())
}
