use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid spin system: {0}")]
    InvalidSystem(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("operator is not Hermitian (max |A - A^dagger| = {0:.3e})")]
    NotHermitian(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("segment {index} carries Lindblad channels; use the density-matrix engine")]
    ChannelsRequireDensity { index: usize },

    #[error("accuracy check failed: {0}")]
    Accuracy(String),

    #[error("invalid spectrum: {0}")]
    InvalidSpectrum(String),

    #[error("no sign change in the analysis window")]
    NoCrossing,

    #[error("eigendecomposition failed to converge")]
    Eigen,

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
