use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("range error: {0}")]
    Range(String),

    #[error("state error: {0}")]
    State(String),

    #[error("measure `{measure}` undefined: {message}")]
    Evaluation { measure: String, message: String },

    #[error("compression failed: {0}")]
    Codec(String),

    #[error("missing calibration table for measure `{0}`")]
    MissingCalibration(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn arg<T>(message: impl Into<String>) -> Result<T> {
    Err(Error::Argument(message.into()))
}
