//! Error types shared across the crate.

use thiserror::Error;

/// Errors produced by the optical kernel, link models and calibration routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Matrix/vector dimensions do not line up; indicates a caller bug.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Argument outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Physically inconsistent parameter set (probabilities, losses, rates).
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A calibration target that no parameter value can reach.
    #[error("infeasible target: {0}")]
    Infeasible(String),
}

pub type Result<T> = std::result::Result<T, Error>;
