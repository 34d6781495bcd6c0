use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the filtering stack.
#[derive(Debug, Error)]
pub enum Error {
    /// Ensemble too small (or too concentrated in weight) for a covariance.
    #[error("degenerate ensemble: {0}")]
    DegenerateEnsemble(String),

    /// A matrix could not be factorized, or a value went non-finite.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Caller passed inconsistent dimensions or out-of-range parameters.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A configured resource limit would be exceeded.
    #[error("resource limit: {0}")]
    Resource(String),

    #[error("training failed: {0}")]
    Training(String),

    #[error("objective evaluation failed: {0}")]
    Objective(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    /// Malformed or incompatible ROM / config document.
    #[error("format error in {path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command line front-end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Argument(_) | Error::Format { .. } => 2,
            Error::Io { .. } => 4,
            _ => 3,
        }
    }
}
