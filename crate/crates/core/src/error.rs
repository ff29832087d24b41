use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("grid mismatch: expected {expected}, found {found}")]
    GridMismatch { expected: String, found: String },

    #[error("custom field `{field}` has a negative entry {value} at cell {index}")]
    CustomFieldNegative {
        field: String,
        index: usize,
        value: f64,
    },

    #[error("negative density {0} passed where n >= 0 is required")]
    NegativeDensity(f64),

    #[error(
        "linear solver did not converge after {max_iters} iterations (residual {last_residual:e})"
    )]
    NoConvergence {
        max_iters: usize,
        last_residual: f64,
    },

    #[error("CFL violation: dt*max|u|/h = {courant} > 1")]
    CflViolation { courant: f64 },

    #[error("monotonicity violated in scalar substep: {0}")]
    MonotonicityViolation(String),

    #[error("invariant `{check}` violated: {detail}")]
    InvariantViolation { check: String, detail: String },

    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },

    #[error("line {line}: {message}")]
    TypeError { line: usize, message: String },

    #[error("line {line}: {message}")]
    RangeError { line: usize, message: String },

    #[error("bad snapshot {path}: {reason}")]
    BadSnapshot { path: PathBuf, reason: String },

    #[error("invalid sweep: {0}")]
    InvalidSweep(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
