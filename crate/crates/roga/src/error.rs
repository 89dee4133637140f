//! Crate-wide error type and the CLI exit-code mapping.

use std::path::PathBuf;

/// Errors surfaced by any public operation in this crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Two quantities that must share a shape do not.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Invalid or inconsistent configuration, including schema violations.
    #[error("configuration error: {0}")]
    Config(String),

    /// A computation produced a non-finite value.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// The input's class distribution does not admit the requested metric.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// Malformed input that is not a configuration file.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Filesystem failure, tagged with the path involved.
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code: 2 configuration, 3 numeric, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numeric(_) => 3,
            Error::Io { .. } => 4,
            _ => 2,
        }
    }

    /// Wraps an `io::Error` with the offending path.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
