use thiserror::Error;

/// Errors produced by the regression, approximation and verification routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("factorization failed: matrix of order {dim} is not positive definite for any jitter up to {max_jitter:e}")]
    FactorizationFailed { dim: usize, max_jitter: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("no convergence after {iterations} iterations (last change {last_change:e})")]
    NoConvergence { iterations: usize, last_change: f64 },

    #[error("kernel does not support {0}")]
    UnsupportedKernel(&'static str),

    #[error("invalid count: {0}")]
    InvalidCount(String),

    #[error("test point coincides with training input {index}")]
    PointCollision { index: usize },

    #[error("internal inconsistency: {0}")]
    InternalInconsistency(String),

    #[error("parse error on line {line}: {reason}")]
    ParseError { line: usize, reason: String },

    #[error("file contains no data rows")]
    EmptyFile,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
