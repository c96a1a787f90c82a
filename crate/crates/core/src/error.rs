use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("coefficient evaluation produced a non-finite value at x = {x}")]
    NonFinite { x: f64 },

    #[error("ball [{lo}, {hi}] meets the singular set [0, {eta}]")]
    BallTouchesSingularity { lo: f64, hi: f64, eta: f64 },

    #[error("derivative of order {order} is not available for {what}")]
    MissingDerivatives { order: usize, what: &'static str },

    #[error("norm table lacks order {order}")]
    MissingNorm { order: usize },

    #[error("time must be positive, got {0}")]
    DegenerateTime(f64),

    #[error("argument outside the regime where the bound holds: {0}")]
    OutOfRegime(String),

    #[error("series did not converge after {terms} terms")]
    SeriesNotConverged { terms: usize },

    #[error("quadrature failed on [{lo}, {hi}]: {reason}")]
    QuadratureFailure { lo: f64, hi: f64, reason: String },

    #[error("exact CIR scheme requires constant coefficients")]
    SchemeMismatch,

    #[error("{paths} path(s) touched the positivity floor ({fraction} of the ensemble)")]
    NonpositivePath { paths: usize, fraction: f64 },

    #[error("sample is empty")]
    EmptySample,

    #[error("log-kernel estimate needs strictly positive samples, found {0}")]
    NonpositiveSample(f64),

    #[error("no sample mass in the localisation ball")]
    ZeroMass,

    #[error("characteristic function is not Hermitian (defect {0:e})")]
    NonHermitian(f64),

    #[error("density is not positive at y = {y}")]
    NonpositiveDensity { y: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
