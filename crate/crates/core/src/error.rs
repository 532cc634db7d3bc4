use thiserror::Error;

/// Errors raised by the mechanisms, estimators and simulator.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported privacy budget: {0}")]
    UnsupportedBudget(String),

    #[error("composition violation: {0}")]
    CompositionViolation(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
