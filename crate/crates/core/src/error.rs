use thiserror::Error;

/// Errors raised by the estimators, simulators and the experiment harness.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid parameter `{key}`: {reason}")]
    InvalidParameter { key: String, reason: String },

    /// `p + q = 1`: the observation law no longer depends on the parameter.
    #[error("flip probabilities are not identifiable: p + q = {sum}")]
    Degenerate { sum: f64 },

    #[error("noise density vanishes on |x| <= {radius} (infimum {value:e})")]
    DensityVanishes { radius: f64, value: f64 },

    #[error("weight matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("projection solver did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("numerical breakdown at step {step}: {reason}")]
    NumericalBreakdown { step: u64, reason: String },

    #[error("config: {0}")]
    Config(String),

    #[error("i/o: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn invalid(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            key: key.into(),
            reason: reason.into(),
        }
    }

    /// Config key the error refers to, when there is one.
    pub fn key(&self) -> Option<&str> {
        match self {
            Error::InvalidParameter { key, .. } => Some(key),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
