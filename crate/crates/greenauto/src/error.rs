//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid search space: {0}")]
    InvalidSpace(String),

    #[error("architecture id {id} out of range (radix bound {bound})")]
    IdOutOfRange { id: u64, bound: u64 },

    #[error("invalid architecture: {0}")]
    InvalidArch(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("non-finite value produced by layer {layer}")]
    NonFinite { layer: String },

    #[error("missing coefficients for op kind {0}")]
    MissingCoefficient(String),

    #[error("non-positive value for log normalization: {0}")]
    NonPositiveScore(f64),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("degenerate gradient set")]
    DegenerateGradients,

    #[error("not enough measured models: need at least {need}, have {have}")]
    TooFewMeasured { need: usize, have: usize },

    #[error("Pareto front is empty")]
    EmptyFront,

    #[error("measurement error: {0}")]
    Measurement(String),

    #[error("search error: {0}")]
    Search(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("state file version mismatch: found {found}, expected {expected}")]
    StateVersion { found: u32, expected: u32 },

    #[error("data error: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Data(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
