use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum BinghamError {
    /// A direction was requested from a (near) zero vector.
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    /// Two eigenvalues closer than the perturbation formulas tolerate.
    #[error("degenerate eigenvalues: minimum gap {gap:e} is below {threshold:e}")]
    DegenerateEigenvalues { gap: f64, threshold: f64 },

    /// The discarded imaginary part of the quadrature is not negligible.
    #[error("numerical warning: imaginary residual is {ratio:e} of the real part")]
    NumericalWarning { ratio: f64 },

    /// The rejection sampler accepts too rarely to be trusted.
    #[error("envelope failure: acceptance rate {rate:e} after {proposals} proposals")]
    EnvelopeFailure { rate: f64, proposals: u64 },

    /// Malformed input record.
    #[error("parse error in {record}, field `{field}`: {message}")]
    Parse {
        record: String,
        field: String,
        message: String,
    },

    #[error("i/o error: {0}")]
    Io(String),
}

impl BinghamError {
    /// True for errors caused by bad input rather than by numerics.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            BinghamError::DegenerateInput(_)
                | BinghamError::InvalidParameter(_)
                | BinghamError::Parse { .. }
                | BinghamError::Io(_)
        )
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        BinghamError::InvalidParameter(msg.into())
    }
}

impl From<std::io::Error> for BinghamError {
    fn from(err: std::io::Error) -> Self {
        BinghamError::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, BinghamError>;
