use thiserror::Error;

/// Errors raised anywhere in the pricing pipeline.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("model validation failed: {0}")]
    Validation(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("assumption violated: {0}")]
    Assumption(String),

    #[error("capacity exceeded: {what} needs {requested}, cap is {cap}")]
    Capacity {
        what: &'static str,
        requested: usize,
        cap: usize,
    },

    #[error("index {index} out of range (size {size})")]
    Index { index: usize, size: usize },

    #[error("value {value} outside interpolation domain [{lo}, {hi}]")]
    Domain { value: f64, lo: f64, hi: f64 },

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("degenerate product: {0}")]
    Degenerate(String),

    #[error("numerical failure: {0}")]
    Numeric(String),
}

impl Error {
    /// Coarse classification used by the command-line front end.
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::InvalidInput(_)
            | Error::Validation(_)
            | Error::Precondition(_)
            | Error::Assumption(_)
            | Error::Domain { .. }
            | Error::Parameter(_)
            | Error::Degenerate(_) => ErrorCategory::Validation,
            Error::Capacity { .. } => ErrorCategory::Capacity,
            Error::Index { .. } | Error::Numeric(_) => ErrorCategory::Numeric,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Validation,
    Capacity,
    Numeric,
}

pub type Result<T> = std::result::Result<T, Error>;
