use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed XML: {0}")]
    MalformedXml(String),
    #[error("undecodable image: {0}")]
    UndecodableImage(String),
    #[error("class {label} has {have} members, need more than {need}")]
    InsufficientClassMembers {
        label: String,
        have: usize,
        need: usize,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("malformed vector file (line {line}): {reason}")]
    MalformedVectorFile { line: usize, reason: String },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("external feature width mismatch: expected {expected}, found {found}")]
    FeatureDimMismatch { expected: usize, found: usize },
    #[error("width mismatch: expected {expected}, found {found}")]
    WidthMismatch { expected: usize, found: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("mask selects no real tokens")]
    EmptyMask,
    #[error("empty dataset")]
    EmptyDataset,
    #[error("non-finite loss at iteration {iteration}")]
    NonFiniteLoss { iteration: u64 },
    #[error("regime {0} requires an init checkpoint (--init)")]
    MissingInitCheckpoint(String),
    #[error("gradient check failed for {0}")]
    GradientCheckFailed(String),
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("pair {0} has no label")]
    UnlabeledPair(String),
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),
    #[error("configuration constraint violated: {0}")]
    ConstraintViolation(String),
    #[error("dataset error: {0}")]
    Dataset(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Broad category, used by the command-line front end to pick an exit code.
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::NonFiniteLoss { .. } | Error::GradientCheckFailed(_) => ErrorCategory::Numerical,
            Error::InvalidArgument(_)
            | Error::UnknownKey(_)
            | Error::ConstraintViolation(_)
            | Error::MissingInitCheckpoint(_) => ErrorCategory::Usage,
            _ => ErrorCategory::Data,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Usage,
    Data,
    Numerical,
}
