use thiserror::Error;

/// Errors produced by the trend filtering library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("signal of length {len} is too short for order {order} (need at least {needed})")]
    TooShort {
        len: usize,
        order: usize,
        needed: usize,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("signal must be non-empty with finite entries")]
    InvalidSignal,

    #[error("difference order must be at least 1")]
    InvalidOrder,

    #[error("binomial coefficient C({n}, {k}) overflows 64-bit integers")]
    BinomialOverflow { n: u64, k: u64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("subdifferential objects are undefined when the r-th differences vanish")]
    ZeroDifferences,

    #[error("solver failed to converge after {iterations} iterations")]
    NotConverged { iterations: usize },

    #[error("invalid signal spec: {0}")]
    InvalidSpec(String),

    #[error("invalid experiment config: {0}")]
    InvalidConfig(String),

    #[error("{failures} of {reps} replications failed")]
    TooManyFailures { failures: usize, reps: usize },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
