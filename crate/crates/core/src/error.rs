use thiserror::Error;

/// Crate-wide error type.
///
/// `Validation` means the inputs were malformed (bad graph, bad config, bad
/// dataset). `InvalidState` marks parameter configurations the model rejects
/// (nonpositive p-field, exponent overflow); the sampler treats these as
/// rejected proposals rather than failures. `Numerical` is a hard abort.
#[derive(Debug, Error)]
pub enum Error {
    #[error("validation: {0}")]
    Validation(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn invalid_state(msg: impl Into<String>) -> Self {
        Error::InvalidState(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
