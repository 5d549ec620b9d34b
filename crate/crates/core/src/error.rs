use thiserror::Error;

/// Failure modes shared by every module.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An input violates a documented invariant. `field` names the offending key.
    #[error("invalid {field}: {reason}")]
    Invalid { field: String, reason: String },

    /// A computation produced a non-finite or singular result.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// The linear solve failed at a specific frequency.
    #[error("singular system at f = {freq_hz} Hz")]
    Singular { freq_hz: f64 },

    /// An internal consistency check failed (e.g. a covariance was not Hermitian).
    #[error("consistency check failed: {0}")]
    Consistency(String),
}

impl Error {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// True for errors caused by bad input rather than numerics.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Invalid { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure(cond: bool, field: &str, reason: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::invalid(field, reason()))
    }
}

pub(crate) fn finite(x: f64, what: &str) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::Numerical(format!("{what} is not finite")))
    }
}
