use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("pole: {0}")]
    Pole(String),
    #[error("singular: {0}")]
    Singular(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invariant violated: {0}")]
    InvariantViolation(String),
    #[error("matrix is not positive definite: {0}")]
    NonPositiveDefinite(String),
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    MaxIterations { iterations: usize, residual: f64 },
    #[error("newton iterate lost positive definiteness at t = {0}")]
    LostPositivity(f64),
    #[error("continuation step underflow at t = {t}")]
    StepUnderflow { t: f64, last_m: Vec<f64> },
    #[error("positivity audit failed: min = {min:e}")]
    PositivityAuditFailed { min: f64 },
    #[error("accuracy target missed: estimate {estimate:e} > requested {requested:e}")]
    Accuracy { estimate: f64, requested: f64 },
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
