use std::path::PathBuf;

use thiserror::Error;

use crate::datasets::ValidationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the harness can surface.
///
/// Transport and protocol failures are kept apart because only the former is
/// retried: a response that arrived but could not be understood will not get
/// better by asking again.
#[derive(Debug, Error)]
pub enum Error {
    #[error("usage error: {0}")]
    Usage(String),

    #[error("transport error from backend `{backend}` after {attempts} attempt(s): {message}")]
    Transport {
        backend: String,
        attempts: u32,
        message: String,
    },

    #[error("protocol error from backend `{backend}` ({code}): {message}")]
    Protocol {
        backend: String,
        code: String,
        message: String,
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("validation failed: {0}")]
    Validation(ValidationReport),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub fn protocol(backend: &str, code: &str, message: impl Into<String>) -> Self {
        Error::Protocol {
            backend: backend.to_string(),
            code: code.to_string(),
            message: message.into(),
        }
    }

    /// Short machine-readable tag, used in run traces.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Usage(_) => "usage",
            Error::Transport { .. } => "transport",
            Error::Protocol { .. } => "protocol",
            Error::Degenerate(_) => "degenerate",
            Error::Parse { .. } => "parse",
            Error::Validation(_) => "validation",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
