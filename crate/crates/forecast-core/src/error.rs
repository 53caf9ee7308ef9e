//! Crate-wide error type with exit-code categories for the CLI.

use std::path::PathBuf;

/// Exit-code category a failure maps to when surfaced by the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    /// Bad flags, bad configuration values: exit code 1.
    Usage,
    /// Malformed or mismatched data, schemas, and files: exit code 2.
    Data,
    /// Non-finite losses, undefined metrics, diverged runs: exit code 3.
    Numeric,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {context}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        context: String,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("checkpoint format error: {0}")]
    Format(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl Error {
    /// One-word machine-greppable code, printed as the first token of a CLI failure line.
    pub fn code(&self) -> &'static str {
        match self {
            Error::ShapeMismatch { .. } => "E_SHAPE",
            Error::InvalidArgument(_) => "E_ARG",
            Error::Config(_) => "E_CONFIG",
            Error::Data(_) => "E_DATA",
            Error::Schema(_) => "E_SCHEMA",
            Error::Numeric(_) => "E_NUMERIC",
            Error::Format(_) => "E_FORMAT",
            Error::Io { .. } => "E_IO",
        }
    }

    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::InvalidArgument(_) | Error::Config(_) => ErrorCategory::Usage,
            Error::ShapeMismatch { .. }
            | Error::Data(_)
            | Error::Schema(_)
            | Error::Format(_)
            | Error::Io { .. } => ErrorCategory::Data,
            Error::Numeric(_) => ErrorCategory::Numeric,
        }
    }

    /// Process exit code for the CLI: 1 usage, 2 data/schema, 3 numeric.
    pub fn exit_code(&self) -> i32 {
        match self.category() {
            ErrorCategory::Usage => 1,
            ErrorCategory::Data => 2,
            ErrorCategory::Numeric => 3,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
