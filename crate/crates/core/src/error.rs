use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("duplicate id {0:?}")]
    DuplicateId(String),

    #[error("label {label:?} invalid for task {task}")]
    LabelInvalidForTask { label: String, task: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("view {view:?} is missing id {id:?}")]
    MissingId { view: String, id: String },

    #[error("view {view:?}: row {id:?} has {found} values, expected {expected}")]
    DimensionMismatch {
        view: String,
        id: String,
        expected: usize,
        found: usize,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("latent dimension exceeds sample count (k = {k}, m = {m})")]
    LatentDimension { k: usize, m: usize },

    #[error("Gram matrix of view {view:?} is not invertible; raise the ridge parameter")]
    SingularGram { view: String },

    #[error("class {0:?} has no members")]
    EmptyClass(String),

    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("model: {0}")]
    Model(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: u64, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
