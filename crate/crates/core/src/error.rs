use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("WAV decode error at byte {offset}: {reason}")]
    Decode { offset: u64, reason: String },

    #[error("cannot parse field `{field}`: {reason}")]
    Parse { field: &'static str, reason: String },

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("checkpoint error in section `{section}`: {reason}")]
    Checkpoint { section: String, reason: String },

    #[error("feature file error: {0}")]
    Format(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    /// True for errors caused by bad caller input rather than the environment.
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::Argument(_))
    }
}
