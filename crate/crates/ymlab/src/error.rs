use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("cutoff kappa = {kappa} lies on the mode lattice pi*Z/Lambda_{axis}")]
    ResonantCutoff { kappa: f64, axis: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("singular quadratic form: sigma_min = {sigma_min:e}")]
    SingularForm { sigma_min: f64 },
    #[error("fit refused: {0}")]
    FitDomain(String),
    #[error("complexity guard: {0}")]
    ComplexityGuard(String),
    #[error("internal consistency failure: {0}")]
    Internal(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
