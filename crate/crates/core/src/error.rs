use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("class {class} out of range (num_classes = {num_classes})")]
    ClassOutOfRange { class: usize, num_classes: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("no candidate class left after exclusion")]
    NoCandidate,

    #[error("duplicate class id {0}")]
    DuplicateClass(usize),

    #[error("row norm {norm} exceeds normalization bound {bound}")]
    NormExceedsBound { norm: f64, bound: f64 },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("model file: {0}")]
    Model(String),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn file(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::File {
            path: path.into(),
            source,
        }
    }
}
