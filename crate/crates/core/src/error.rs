use thiserror::Error;

/// Errors produced by the solver library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("convergence failure: {0}")]
    Convergence(String),

    /// Structural problem in an input document. `pointer` is a JSON pointer.
    #[error("parse error at {pointer}: {message}")]
    Parse { pointer: String, message: String },

    #[error("validation error at {pointer}: {message}")]
    Validation { pointer: String, message: String },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn validation(pointer: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Validation {
            pointer: pointer.into(),
            message: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::Dimension { expected, found })
    }
}
