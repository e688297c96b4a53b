//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by the estimator, bootstrap, oracle and harness layers.
#[derive(Debug, Error)]
pub enum Error {
    /// Eigenpair index outside `1..=truncation`.
    #[error("eigenpair index {index} out of range 1..={max}")]
    IndexOutOfRange { index: usize, max: usize },

    /// Argument outside its mathematical domain (e.g. x outside [0,1]).
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid or incomplete configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// A bad data arrival (non-finite or out-of-domain); state is unchanged.
    #[error("data error: {0}")]
    Data(String),

    /// Mismatched or unusable object state (lengths, counts, empty inputs).
    #[error("state error: {0}")]
    State(String),

    /// Numerical failure (singular system beyond jitter, non-finite result).
    #[error("numerical error: {0}")]
    Numerical(String),

    /// A step-size/eigenvalue combination that breaks the oracle recursions.
    #[error("step schedule violation: {0}")]
    ScheduleViolation(String),

    /// Bootstrap ensemble too small for the requested statistic.
    #[error("insufficient ensemble: need at least {needed} trajectories, got {got}")]
    InsufficientEnsemble { needed: usize, got: usize },

    /// Stream parse failure with the offending line number (1-based).
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
