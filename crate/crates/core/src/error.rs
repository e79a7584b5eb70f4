use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty mask: {0}")]
    EmptyMask(&'static str),

    #[error("ground truth requested from unlabeled dataset `{0}`")]
    UnlabeledAccess(String),

    #[error("ground truth supplied to an objective defined on unlabeled data")]
    UnexpectedGroundTruth,

    #[error("parse error in {path} at byte {offset}: {reason}")]
    Parse { path: PathBuf, offset: u64, reason: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, offset: u64, reason: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            offset,
            reason: reason.into(),
        }
    }
}
