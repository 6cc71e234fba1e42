use thiserror::Error;

/// Errors raised by the numerical kernels.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("probs must sum to 1 (got {sum:.17})")]
    ProbsNotNormalized { sum: f64 },

    #[error("probs must be strictly positive (entry {index} is {value})")]
    DegenerateProbability { index: usize, value: f64 },

    #[error("phase-space mismatch: expected {expected}, got {found}")]
    PhaseSpaceMismatch {
        expected: &'static str,
        found: &'static str,
    },

    #[error("map {index} has no derivative data")]
    NoDerivative { index: usize },

    #[error("map {index} is not a C1 diffeomorphism: {reason}")]
    NotDiffeomorphism { index: usize, reason: String },

    #[error("enumeration of {words} words exceeds the budget of {budget}")]
    EnumerationBudget { words: u128, budget: u128 },

    #[error("not enough usable points: need {needed}, have {found}")]
    InsufficientData { needed: usize, found: usize },

    #[error("map {index} is not injective on the probe grid")]
    NotInjective { index: usize },

    #[error("overflow guard: accumulated log-scale {log_scale} at step {step}")]
    OverflowGuard { step: usize, log_scale: f64 },

    #[error("hypothesis fails: {0}")]
    HypothesisFailed(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("precondition violated: {0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
