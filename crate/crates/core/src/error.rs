use thiserror::Error;

/// Errors raised across the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("grid mismatch: fields live on different domains")]
    GridMismatch,

    #[error("unsupported exponent p = {0} (only 2 and 4 are available)")]
    UnsupportedExponent(u32),

    #[error("field is not mean-zero: relative mean {0:e}")]
    NonzeroMean(f64),

    #[error("field is not divergence-free: relative divergence {0:e}")]
    NotDivergenceFree(f64),

    #[error("parameter restriction violated: {0}")]
    ParameterRestriction(String),

    #[error("invalid parameter `{key}`: {reason}")]
    InvalidParameter { key: String, reason: String },

    #[error("noise model mismatch: {0}")]
    NoiseMismatch(String),

    #[error("interpolant: {0}")]
    Interpolant(String),

    #[error("degenerate ensemble: {0}")]
    DegenerateEnsemble(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("numerical abort at step {step} (t = {time}): {reason}")]
    NumericalAbort { step: usize, time: f64, reason: String },

    #[error("monte-carlo run failed: {excluded} of {total} paths excluded")]
    TooManyExclusions { excluded: usize, total: usize },

    #[error("config: {0}")]
    Config(String),

    #[error("snapshot format: {0}")]
    Snapshot(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(key: &str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        key: key.to_string(),
        reason: reason.into(),
    }
}
