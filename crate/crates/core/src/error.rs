use std::fmt;

use thiserror::Error;

/// Errors raised across the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("point {point} lies outside the validity radius {radius}")]
    Domain { point: String, radius: f64 },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("contour passes through or too close to a zero: {0}")]
    Contour(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("degenerate map: {0}")]
    Degenerate(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("lattice mismatch between points")]
    LatticeMismatch,

    #[error("approximation failed: {0}")]
    Approximation(String),

    #[error("thresholds unmet at step {step}: {detail}")]
    ThresholdUnmet { step: usize, detail: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(msg: impl fmt::Display) -> Self {
        Error::Parameter(msg.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
