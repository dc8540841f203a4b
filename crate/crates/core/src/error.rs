use nalgebra::DMatrix;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("coefficient evaluation produced a non-finite value at t = {time}")]
    CoefficientEvaluation { time: f64 },

    #[error("{what} did not reach tolerance {tol:e} within {steps} steps")]
    Convergence {
        what: &'static str,
        tol: f64,
        steps: usize,
    },

    /// Cholesky of the Gram matrix failed; `fallback` is the leading-order
    /// value `(t - s) * Id`.
    #[error("Gram matrix is numerically singular for t - s = {tau:e}")]
    NearSingularGram { tau: f64, fallback: DMatrix<f64> },

    #[error("field is not decayed inside the half box: relative outer magnitude {defect:e} > {threshold:e}")]
    DomainTruncation { defect: f64, threshold: f64 },

    #[error("affine pullback leaves the box: |z|_inf = {reach} > L = {half_width}")]
    OutOfBox { reach: f64, half_width: f64 },

    #[error("decay fit rejected: {reason}")]
    FitQuality { reason: String },

    #[error("iteration diverged at t = {time}: norm ratio {ratio:e}")]
    Divergence { time: f64, ratio: f64 },

    #[error("Picard iteration not contractive after {iterations} iterations (last factor {factor:.3}); try a smaller T0")]
    NonContraction { iterations: usize, factor: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Input and configuration problems, as opposed to numerical failures.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidArgument(_) | Error::Config(_) | Error::Json(_)
        )
    }
}
