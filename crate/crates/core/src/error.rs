use std::path::PathBuf;

use crate::net::TrainHistory;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unsupported image format: {0}")]
    Format(String),
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("distribution fit failed: {0}")]
    Fit(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("dataset error: {0}")]
    Dataset(String),
    #[error("training diverged at epoch {epoch}: non-finite loss")]
    Divergence {
        epoch: usize,
        history: Box<TrainHistory>,
    },
    #[error("malformed file {path}: {reason}")]
    Malformed { path: PathBuf, reason: String },
    #[error("version mismatch: {0}")]
    Version(String),
    #[error("consistency error: {0}")]
    Consistency(String),
    #[error("dataset layout error: {0}")]
    Layout(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn malformed(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Malformed {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
