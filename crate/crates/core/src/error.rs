use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite value produced by layer {layer}")]
    NonFinite { layer: usize },

    #[error("non-finite input: {0}")]
    NonFiniteInput(String),

    #[error("activations do not belong to this network: {0}")]
    StaleActivations(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("attribute `{0}` missing on sample {1}")]
    MissingAttribute(String, usize),

    #[error("empty training subsets for attribute `{attribute}` at intervals {intervals:?}")]
    EmptyIntervals {
        attribute: String,
        intervals: Vec<usize>,
    },

    #[error("{path}: {cause} (at {location})")]
    Format {
        path: PathBuf,
        location: String,
        cause: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn dims(context: impl Into<String>, expected: usize, actual: usize) -> Self {
        Error::DimensionMismatch {
            context: context.into(),
            expected,
            actual,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
