//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by the library. Numerical routines return these rather
/// than panicking; panics indicate programming errors, not bad inputs.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// Distribution parameters outside their domain (e.g. a non-positive scale).
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// An argument outside the operation's domain (e.g. a negative observation).
    #[error("domain error: {0}")]
    Domain(String),

    /// The score recursion produced a non-finite value at the given day.
    #[error("filter failure at day {day}: {reason}")]
    Filter { day: usize, reason: String },

    /// Estimation could not produce a usable optimum.
    #[error("estimation failed: {0}")]
    Estimation(String),

    /// Malformed or incomplete input data.
    #[error("ingestion error: {0}")]
    Ingestion(String),

    /// Not enough observations for the requested operation.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// Series that must share an index do not.
    #[error("misaligned series: {0}")]
    Misaligned(String),

    /// An internal numerical routine failed to converge.
    #[error("numerical error: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
