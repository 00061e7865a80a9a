//! Crate-wide error type.

use crate::erm::PoolReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A partition part carries (numerically) zero probability mass, which
    /// breaks conditional sampling and part-probability estimation.
    #[error("degenerate partition: {0}")]
    DegeneratePartition(String),

    /// Every restart candidate failed the localization membership check; the
    /// report lists each candidate's empirical risk and measured probability.
    #[error("local ERM infeasible: no candidate passed the localization check ({} candidates)", .0.candidates.len())]
    LocalErmInfeasible(Box<PoolReport>),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
