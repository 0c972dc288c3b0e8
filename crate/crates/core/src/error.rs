use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the core library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("grid mismatch: expected dims {expected:?}, found {found:?}")]
    GridMismatch {
        expected: [usize; 3],
        found: [usize; 3],
    },

    #[error("malformed NIfTI header field `{field}`: {reason}")]
    NiftiHeader { field: &'static str, reason: String },

    #[error("unsupported NIfTI datatype code {0}")]
    UnsupportedDatatype(i16),

    #[error("truncated voxel payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("value {value} at voxel {index} is not representable as {dtype}")]
    NotRepresentable {
        value: f32,
        index: usize,
        dtype: &'static str,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("empty population: {0}")]
    EmptyPopulation(String),

    #[error("not enough samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("non-finite value in `{0}`")]
    NonFinite(String),

    #[error("both classes must be present")]
    SingleClass,

    #[error("feature arity mismatch: model expects {expected}, got {got}")]
    Arity { expected: usize, got: usize },

    #[error("exact Shapley enumeration is limited to {max} features, model has {got}")]
    TooManyFeatures { max: usize, got: usize },

    #[error("model snapshot: {0}")]
    Snapshot(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
