use thiserror::Error;

use crate::metrics::MetricKind;

/// Errors produced across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid probability distribution: {0}")]
    InvalidDistribution(String),

    #[error("dynamic programming did not converge within {0} iterations")]
    NonConvergence(usize),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("insufficient samples: need {needed}, have {available}")]
    InsufficientSamples { needed: usize, available: usize },

    #[error("metric {0} has no sample-based estimator")]
    NoEstimator(MetricKind),

    #[error("pair cache has no entry for ({0}, {1})")]
    MissingPair(usize, usize),

    #[error("gradient tape does not belong to the current network parameters")]
    StaleTape,

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

pub(crate) fn shape(msg: impl Into<String>) -> Error {
    Error::ShapeMismatch(msg.into())
}
