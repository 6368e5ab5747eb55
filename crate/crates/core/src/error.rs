use alloc::string::String;
use alloc::vec::Vec;

use crate::hierarchy::BlockId;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite value at position {index}")]
    NonFinite { index: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("window of {got} values is too short (need at least {need})")]
    WindowTooShort { got: usize, need: usize },

    #[error("insufficient history for day {day}: earliest valid day index is {earliest}")]
    InsufficientHistory { day: usize, earliest: usize },

    #[error("design matrix is rank deficient in columns {columns:?}")]
    RankDeficient { columns: Vec<usize> },

    #[error("matrix is not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },

    #[error(
        "reconciliation system is numerically singular (condition number {condition:.3e}); \
         use stronger covariance shrinkage"
    )]
    Singular { condition: f64 },

    #[error("block {0} is not part of the hierarchy")]
    UnknownBlock(BlockId),

    #[error("network training produced NaN loss for member {member} after a restart")]
    NanLoss { member: usize },

    #[error("loss differential has zero variance")]
    ZeroVariance,

    #[error("base metric is zero, percentage gain undefined")]
    ZeroBaseMetric,
}

pub(crate) fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite { index }),
        None => Ok(()),
    }
}
