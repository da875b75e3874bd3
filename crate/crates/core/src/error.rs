use std::io;
use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{0}: no data rows")]
    EmptyInput(PathBuf),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("no co-occurrence data: total pair count is zero")]
    NoCooccurrence,

    #[error("filter left no guardians with at least {0} distinct urls")]
    EmptyAfterFilter(usize),

    #[error("guardian {guardian} has {count} interactions, at least {required} are required")]
    TooFewInteractions {
        guardian: usize,
        count: usize,
        required: usize,
    },

    #[error("training diverged at iteration {iteration} (loss = {loss}); try a smaller learning rate")]
    Diverged { iteration: usize, loss: f64 },

    #[error("index {index} out of range (size {size})")]
    IndexOutOfRange { index: usize, size: usize },

    #[error("unknown guardian id `{0}`")]
    UnknownGuardian(String),

    #[error("relevant set is empty")]
    EmptyRelevant,

    #[error("empty vocabulary")]
    EmptyVocabulary,

    #[error("cohort `{0}` is empty")]
    EmptyCohort(String),

    #[error("synthetic guardian {0} has no interactions after {1} resampling attempts")]
    SyntheticRetriesExhausted(usize, usize),

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
