use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite entry at index {index}: {value}")]
    NonFiniteEntry { index: usize, value: f64 },

    #[error("numeric overflow: {0}")]
    NumericOverflow(String),

    #[error("unsupported hvp method: {0}")]
    UnsupportedMethod(String),

    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("invalid theorem instance: {0}")]
    InvalidInstance(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("unsupported model: {0}")]
    UnsupportedModel(String),

    #[error("degenerate removal: {0}")]
    DegenerateRemoval(String),

    #[error("training diverged at step {step}: loss = {loss}")]
    Diverged { step: usize, loss: f64 },

    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::ContractViolation(msg.into())
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
