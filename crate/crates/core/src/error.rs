use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual} ({what})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("matrix is not numerically positive definite")]
    NotPositiveDefinite,
    #[error("mode search did not converge after {iterations} iterations (gradient max-norm {grad_norm:e})")]
    NoConvergence { iterations: usize, grad_norm: f64 },
    #[error("invalid Weibull shape {0}")]
    InvalidShape(f64),
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("model of size {size} exceeds the auxiliary capacity {cap}")]
    ModelTooLarge { size: usize, cap: usize },
    #[error("enumeration over p = {p} covariates exceeds the limit {max_p}")]
    TooManyCovariates { p: usize, max_p: usize },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
