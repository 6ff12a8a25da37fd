use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dispersion is not positive at x = {x} (value {value})")]
    NondegeneracyViolation { x: f64, value: f64 },

    #[error("{endpoint} boundary declared {declared} but numeric tests classify it as {found}")]
    ClassificationMismatch {
        endpoint: &'static str,
        declared: String,
        found: String,
    },

    #[error("boundary integral near the {endpoint} endpoint could not be decided: {detail}")]
    InconclusiveIntegral {
        endpoint: &'static str,
        detail: String,
    },

    #[error("finite-difference stencil of half-width {step} at x = {x} leaves the state interval")]
    StencilOutOfDomain { x: f64, step: f64 },

    #[error("integrand is not finite at x = {x}")]
    NonFiniteIntegrand { x: f64 },

    #[error("improper integral towards {endpoint} diverges (partial sum {partial})")]
    DivergentTail { endpoint: f64, partial: f64 },

    #[error("point ({y}, {z}) is outside the ordering region y < z")]
    OutOfRegion { y: f64, z: f64 },

    #[error("holding cost is not integrable against the speed measure from {from}: {detail}")]
    IntegrabilityFailure { from: f64, detail: String },

    #[error("condition {0} needs an optimization result")]
    MissingOptimum(&'static str),

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("every optimizer start failed")]
    AllStartsFailed,

    #[error("state left the interval at t = {t} (x = {x}) after step halving")]
    StateEscapedDomain { t: f64, x: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;
