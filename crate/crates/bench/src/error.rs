use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    /// Unreadable, malformed or inconsistent configuration. Exit code 2.
    #[error("config error: {0}")]
    Config(String),

    /// A solver or classifier failed numerically. Exit code 3.
    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl BenchError {
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Config(_) => 2,
            BenchError::Numeric(_) => 3,
            BenchError::Io { .. } => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        BenchError::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<nashdyn::Error> for BenchError {
    fn from(e: nashdyn::Error) -> Self {
        match e {
            nashdyn::Error::Argument(_)
            | nashdyn::Error::Construction(_)
            | nashdyn::Error::Set(_) => BenchError::Config(e.to_string()),
            nashdyn::Error::Evaluation { .. } | nashdyn::Error::Numeric(_) => {
                BenchError::Numeric(e.to_string())
            }
        }
    }
}

pub type Result<T> = std::result::Result<T, BenchError>;
