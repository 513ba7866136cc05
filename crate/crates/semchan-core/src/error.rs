//! Error types shared across the toolkit.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter for {family}: {reason}")]
    InvalidParameter { family: String, reason: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("fit did not converge after {iterations} iterations")]
    Convergence { iterations: usize },

    #[error("delay {delay_ns} ns of MPC #{index} outside grid range [0, {max_ns} ns]")]
    DelayOutOfRange {
        index: usize,
        delay_ns: f64,
        max_ns: f64,
    },

    #[error("power normalization undefined at tau = 0")]
    ZeroDelaySingularity,

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("missing configuration for label {0}")]
    MissingLabel(u8),

    #[error("all candidate families failed to fit: {0}")]
    AllCandidatesFailed(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
