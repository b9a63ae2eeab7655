use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A matching broke one-order-per-driver or one-driver-per-order.
    #[error("constraint violation: {0}")]
    ConstraintViolation(String),

    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },

    #[error("non-finite objective at time step {t}, iteration {iteration} (step {step:e}, objective {objective})")]
    Numerical {
        t: usize,
        iteration: usize,
        step: f64,
        objective: f64,
    },

    /// A policy was asked to run without the inputs it needs.
    #[error("missing input for {policy}: {what}")]
    MissingInput { policy: String, what: String },

    #[error("invalid config: {field}: {message}")]
    Config { field: String, message: String },

    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn domain(message: impl Into<String>) -> Self {
        Error::Domain(message.into())
    }
}
