use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, NilmError>;

#[derive(Debug, Error)]
pub enum NilmError {
    /// Bad argument shapes, indices or values handed to an operation.
    #[error("invalid input: {0}")]
    Input(String),

    /// Inconsistent configuration (training, folds, synthetic generator).
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A factorization failed even after jitter escalation.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Loaded data cannot support the requested transformation.
    #[error("data error: {0}")]
    Data(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Wraps an error with the fold / variant it occurred in.
    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<NilmError>,
    },
}

impl NilmError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        NilmError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        NilmError::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }
}
