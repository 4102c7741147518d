use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate step: {0}")]
    DegenerateStep(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("training failure: {0}")]
    TrainingFailure(String),

    #[error("I/O error on {path}: {message}")]
    Io { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, err: impl std::fmt::Display) -> Self {
        Error::Io {
            path: path.into(),
            message: err.to_string(),
        }
    }

    /// Process exit code for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParameter(_) | Error::DegenerateStep(_) | Error::DegenerateInput(_) => 2,
            Error::Io { .. } | Error::Format(_) => 3,
            Error::TrainingFailure(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
