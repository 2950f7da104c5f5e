use thiserror::Error;

/// Errors produced by the counting engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("privacy budget exceeded: requested (eps={requested_epsilon}, delta={requested_delta}), remaining (eps={remaining_epsilon}, delta={remaining_delta})")]
    BudgetExceeded {
        requested_epsilon: f64,
        requested_delta: f64,
        remaining_epsilon: f64,
        remaining_delta: f64,
    },

    /// The Gaussian mechanism is only calibrated for epsilon in (0, 1).
    #[error("gaussian mechanism requires epsilon < 1 (got {0}); split the budget across more stages or use pure mode")]
    GaussianEpsilonTooLarge(f64),

    #[error("corrupt structure: {0}")]
    Format(String),

    #[error("checksum mismatch in serialized structure")]
    Checksum,

    #[error("internal inconsistency: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid_input(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

pub(crate) fn invalid_param(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
