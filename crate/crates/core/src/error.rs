use thiserror::Error;

/// Errors raised by the numerical engine and the scenario layer.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("point {x:?} lies outside chart {chart}")]
    Domain { chart: usize, x: Vec<f64> },

    #[error("degenerate direction: |v| = {norm:e} is below the slit-bundle threshold")]
    DegenerateDirection { norm: f64 },

    #[error("strong convexity violated at x = {x:?}, v = {v:?} (min eigenvalue {min_eigenvalue:e})")]
    ConvexityViolation { x: Vec<f64>, v: Vec<f64>, min_eigenvalue: f64 },

    #[error("Legendre inversion failed after {iterations} iterations (residual {residual:e})")]
    InversionFailure { residual: f64, iterations: usize },

    #[error("integration failed at t = {t}: step size underflow near x = {x:?}")]
    IntegrationFailure { t: f64, x: Vec<f64> },

    #[error("geodesic left the atlas at t = {t}, x = {x:?}")]
    DomainExit { t: f64, x: Vec<f64> },

    #[error("immersion is not of full rank at theta = {theta:?} (smallest singular value {sigma:e})")]
    Immersion { theta: Vec<f64>, sigma: f64 },

    #[error("point not reached by any normal geodesic: {reason}")]
    Unreached { reason: String },

    #[error("point lies on the cut locus: {count} distinct minimizing normal geodesics")]
    PointOnCutLocus { count: usize },

    #[error("consistency error: {0}")]
    Consistency(String),

    #[error("retraction undefined: cut time along the ray is infinite")]
    RetractionUndefined,

    #[error("d(N,.)^2 is not differentiable here along X: one-sided derivatives left = {left}, right = {right} ({count} minimizers)")]
    NonDifferentiable { left: f64, right: f64, count: usize },

    #[error("functional undefined: {0}")]
    UndefinedFunctional(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("invalid scenario at {pointer}: {message}")]
    Config { pointer: String, message: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
