use thiserror::Error;

/// Errors produced anywhere in the release pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("series is empty")]
    EmptySeries,

    #[error("negative value {value} at t={index}")]
    NegativeValue { index: usize, value: f64 },

    #[error("non-integer count {value} at t={index}")]
    NonIntegerCount { index: usize, value: f64 },

    #[error("non-finite value at t={index}")]
    NonFiniteValue { index: usize },

    #[error("relative frequency {0} does not have an integer reciprocal")]
    NonIntegerStride(f64),

    #[error("invalid Gaussian filter width {0}")]
    InvalidSigma(f64),

    #[error("invalid filter kernel: {0}")]
    InvalidKernel(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("alpha^2 = {alpha_sq} is below the sampling rate p = {p}; the Chernoff bound does not apply")]
    AlphaBelowSamplingRate { alpha_sq: f64, p: f64 },

    #[error("invalid filter statistics: {0}")]
    InvalidStats(String),

    #[error("unsatisfiable: {0}")]
    Unsatisfiable(String),

    #[error("epsilon {0} outside (0, 1)")]
    InvalidEpsilon(f64),

    #[error("invalid DFT coefficient count k={k} for T={t}")]
    InvalidK { k: usize, t: usize },

    #[error("Poisson subsample kept no indices")]
    EmptySubsample,

    #[error("interpolation requires at least one kept index")]
    EmptyDraw,

    #[error("degradation factor c={0} must exceed 1")]
    InvalidC(f64),

    #[error("parse error at line {line}: {message}")]
    ParseError { line: usize, message: String },

    #[error("gap in time index: expected t={expected}, found t={found}")]
    GapInIndex { expected: usize, found: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("I/O error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
        Error::ParseError {
            line,
            message: e.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
