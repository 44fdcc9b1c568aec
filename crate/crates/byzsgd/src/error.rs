//! Library-wide error type.
//!
//! Two error families matter to callers: configuration problems (bad or
//! inconsistent parameters, rejected before any work starts) and runtime
//! problems (I/O, malformed data files). The CLI maps the former to exit
//! code 1 and the latter to exit code 2.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid or inconsistent configuration, detected before a run starts.
    #[error("configuration error: {0}")]
    Config(String),

    /// A data file exists but its contents are not what they claim to be.
    /// Reports the file and the byte offset where parsing gave up.
    #[error("ingestion error in {path} at byte {offset}: {reason}")]
    Ingestion {
        path: PathBuf,
        offset: u64,
        reason: String,
    },

    /// An operation was asked of a problem that does not support it,
    /// e.g. classification accuracy on the synthetic quadratic problem.
    #[error("unsupported operation: {0}")]
    Unsupported(String),

    /// An empirical check ran to completion but did not hold.
    #[error("verification failed: {0}")]
    VerificationFailed(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn ingestion(path: impl Into<PathBuf>, offset: u64, reason: impl Into<String>) -> Self {
        Error::Ingestion {
            path: path.into(),
            offset,
            reason: reason.into(),
        }
    }

    /// Exit code the CLI should use for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            _ => 2,
        }
    }
}
