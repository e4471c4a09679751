//! Error type shared by every module of the crate.

use thiserror::Error;

/// Errors produced by construction, discretization, decomposition, and I/O.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied value violates a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Two discretized objects do not share the same grids.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// The operation is not defined for the given variant (e.g. pointwise
    /// evaluation of a tabulated kernel).
    #[error("unsupported operation: {0}")]
    Unsupported(String),

    /// A text input could not be parsed; `line` is 1-based.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// An iterative numerical routine failed to converge.
    #[error("numerical failure in fiber {fiber}: {message}")]
    NumericalFailure { fiber: usize, message: String },

    /// A kernel failed validation and downstream processing was refused.
    #[error("kernel validation failed: {0}")]
    Validation(String),

    /// An underlying filesystem operation failed.
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
