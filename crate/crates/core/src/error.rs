//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by validation, tuning, kernels and backends.
#[derive(Debug, Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),
    #[error("size error: {0}")]
    Size(String),
    #[error("unsupported radix: {0}")]
    UnsupportedRadix(String),
    #[error("plan error: {0}")]
    Plan(String),
    #[error("singular system: {0}")]
    Singular(String),
    #[error("range error: {0}")]
    Range(String),
    #[error("no feasible configuration: {0}")]
    NoFeasibleConfig(String),
    #[error("surrogate model untrainable: {0}")]
    UntrainableModel(String),
    #[error("backend failure: {0}")]
    Backend(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit status associated with this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NoFeasibleConfig(_) => 3,
            Error::Backend(_) => 4,
            _ => 2,
        }
    }
}
