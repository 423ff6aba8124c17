use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, HsiError>;

#[derive(Debug, Error)]
pub enum HsiError {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("invalid {what}: {reason}")]
    Invalid { what: &'static str, reason: String },

    #[error("{path}: line {line}, column {column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("{path}: truncated matrix file, expected {expected} bytes but only {available} available")]
    Truncated {
        path: PathBuf,
        expected: u64,
        available: u64,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("clustering failed: {0}")]
    Clustering(String),

    #[error("solver diverged at iteration {iteration}: non-finite value in {variable}")]
    Diverged {
        iteration: usize,
        variable: &'static str,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl HsiError {
    pub(crate) fn dim(context: &'static str, expected: impl ToString, actual: impl ToString) -> Self {
        HsiError::Dimension {
            context,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn invalid(what: &'static str, reason: impl Into<String>) -> Self {
        HsiError::Invalid {
            what,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HsiError::Io {
            path: path.into(),
            source,
        }
    }
}
