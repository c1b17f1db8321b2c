//! Error types shared across the toolkit.

use thiserror::Error;

/// Unified error type for all toolkit operations.
#[derive(Debug, Error)]
pub enum Error {
    /// A vector cannot be normalized (zero norm or non-finite entries).
    #[error("normalization error: {0}")]
    Normalization(String),

    /// Vector or matrix dimensions do not match.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    /// An operation received an empty input it cannot handle.
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    /// Malformed dataset or score file. `line` is 1-based; 0 means the error
    /// concerns the file as a whole.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// A numeric argument is outside its allowed range.
    #[error("out of range: {0}")]
    Range(String),

    /// Invalid configuration or unusable argument combination.
    #[error("invalid config: {0}")]
    Config(String),

    /// Not enough data to perform the requested computation.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// Filesystem failure.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
