use thiserror::Error;

/// Errors produced by tensor arithmetic, flow evaluation, training and I/O.
#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes are incompatible for the requested operation.
    #[error("shape mismatch in {op}: {details}")]
    ShapeMismatch { op: &'static str, details: String },

    /// A value outside the mathematical domain of an operation (e.g. log of a
    /// non-positive number).
    #[error("domain error in {op}: {details}")]
    Domain { op: &'static str, details: String },

    /// Misuse of the gradient tape (backward on an untracked or non-scalar
    /// value, repeated backward, mixing tapes).
    #[error("autodiff error: {0}")]
    Autodiff(String),

    /// A NaN or infinity showed up where the computation requires finite values.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// Invalid configuration (bad hyperparameter, malformed spec).
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Checkpoint file is missing, malformed or inconsistent.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// Malformed CSV or manifest content.
    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, details: impl Into<String>) -> Self {
        Error::ShapeMismatch { op, details: details.into() }
    }

    pub(crate) fn domain(op: &'static str, details: impl Into<String>) -> Self {
        Error::Domain { op, details: details.into() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
