use thiserror::Error;

/// Errors raised by the witness pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum QngError {
    /// A parameter is outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// The requested parameter combination has no implementation.
    #[error("unsupported parameters: {0}")]
    Unsupported(String),

    /// A truncated distribution cannot meet the requested accuracy.
    #[error("precision error: {0}")]
    Precision(String),

    /// A bracketed root search did not find a sign change or did not converge.
    #[error("root finding failed: {0}")]
    RootFinding(String),

    /// The sampled threshold curve is not monotone where it must be.
    #[error("non-monotone threshold curve: {0}")]
    NonMonotone(String),

    /// A query falls above the sampled range of a threshold curve.
    #[error("r_n1 = {r_n1:e} is above the curve validity range (max {max:e})")]
    OutOfRange { r_n1: f64, max: f64 },

    /// Input data is internally inconsistent.
    #[error("inconsistent input: {0}")]
    Inconsistent(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl QngError {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        QngError::Domain(msg.into())
    }
}

impl From<std::io::Error> for QngError {
    fn from(e: std::io::Error) -> Self {
        QngError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for QngError {
    fn from(e: serde_json::Error) -> Self {
        QngError::Parse(e.to_string())
    }
}

impl From<csv::Error> for QngError {
    fn from(e: csv::Error) -> Self {
        QngError::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, QngError>;
