use std::path::PathBuf;

use thiserror::Error;

use crate::features::FeatureGroup;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Malformed { path: PathBuf, line: usize, message: String },

    #[error("{path} contains no entries")]
    Empty { path: PathBuf },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("feature group `{0}` is enabled but its resource is not loaded")]
    MissingResource(FeatureGroup),

    #[error("unknown feature group `{0}`")]
    UnknownGroup(String),

    #[error("out-of-vocabulary word `{0}`")]
    OutOfVocabulary(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
