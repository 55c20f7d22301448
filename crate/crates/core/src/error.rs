use thiserror::Error;

/// Failures shared by every module of the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("density has a negative entry {value} at index {index}")]
    NegativeDensity { index: usize, value: f64 },
    #[error("density integrates to {0} instead of 1")]
    NotNormalized(f64),
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("curvature condition fails: discrete 2U'' = {value} < kappa = {kappa} at x = {x}")]
    Curvature { x: f64, value: f64, kappa: f64 },
    #[error("invariant measure is not normalizable on this grid")]
    NonNormalizable,
    #[error("time must be positive, got {0}")]
    NonPositiveTime(f64),
    #[error("solver hit the iteration cap ({iterations}) with residual {residual:e}")]
    MaxIterExceeded { iterations: usize, residual: f64 },
    #[error("kernel underflows on the whole support of the marginal")]
    DegenerateKernel,
    #[error("fixed point did not converge (last residual {residual:e})")]
    NoConvergence { residual: f64, history: Vec<f64> },
    #[error("marginal barycenters differ: {0} vs {1}")]
    BarycenterMismatch(f64, f64),
    #[error("ill-conditioned: {0}")]
    IllConditioned(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
