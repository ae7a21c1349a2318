use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("alpha must lie in (0,N): got alpha={alpha} for N={dim}")]
    AlphaOutOfRange { alpha: f64, dim: usize },
    #[error("exponent q must be >= 1, got {0}")]
    InvalidExponent(f64),
    #[error("field does not live on the expected grid")]
    GridMismatch,
    #[error("singular-diagonal: kernel is infinite at r = s for alpha <= 1")]
    SingularDiagonal,
    #[error("zero-field: cannot renormalize the zero field")]
    ZeroField,
    #[error("no-rescaling: p = 1 admits no Lagrange rescaling")]
    NoRescaling,
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("invalid solver options: {0}")]
    InvalidOptions(String),
    #[error("step-size underflow in line search at iteration {iteration}")]
    StepUnderflow { iteration: usize },
    #[error("solver did not converge")]
    NotConverged,
    #[error("dirichlet-only: the identity assumes u = 0 on the boundary")]
    DirichletOnly,
    #[error("nonexistence threshold (N+alpha)/(N-2) is undefined for N = 2")]
    ThresholdUndefined,
    #[error("sign/zero in window: {0}")]
    DecayWindow(String),
    #[error("expression error at column {column}: {message}")]
    Expression { column: usize, message: String },
    #[error("solve failed at alpha = {alpha}: {source}")]
    SweepFailed { alpha: f64, source: Box<Error> },
    #[error("kernel cache: {0}")]
    KernelCache(String),
}

pub type Result<T> = std::result::Result<T, Error>;
