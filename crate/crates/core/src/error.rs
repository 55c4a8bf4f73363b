use thiserror::Error;

/// Errors raised by oracles, solvers and constraint sets.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("problem construction failed: {0}")]
    Construction(String),

    #[error("evaluation failed at coordinate {coordinate}: {detail}")]
    Evaluation { coordinate: usize, detail: String },

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("constraint set error: {0}")]
    Set(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }
}
