use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CmeError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("unsupported: {0}")]
    Capability(String),
    #[error("value outside range: {0}")]
    Range(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("numeric failure: {msg} (achieved {achieved:e})")]
    Numeric { msg: String, achieved: f64 },
}

impl CmeError {
    pub fn numeric(msg: impl Into<String>, achieved: f64) -> Self {
        CmeError::Numeric {
            msg: msg.into(),
            achieved,
        }
    }

    /// True for errors caused by bad input rather than by the numerics.
    pub fn is_validation(&self) -> bool {
        !matches!(self, CmeError::Numeric { .. })
    }
}

pub type Result<T> = std::result::Result<T, CmeError>;
