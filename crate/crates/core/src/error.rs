use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("csv error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{path}: missing required column `{column}`")]
    Schema { path: PathBuf, column: String },

    #[error("{path}: row {row}: unknown stance label `{label}`")]
    Label {
        path: PathBuf,
        row: usize,
        label: String,
    },

    #[error("{path}: row {row}: {message}")]
    Row {
        path: PathBuf,
        row: usize,
        message: String,
    },

    #[error("body id {0} referenced by a stance row has no body text")]
    Join(u64),

    #[error("degenerate split: {0}")]
    DegenerateSplit(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("shape mismatch in {branch} branch: expected {expected}, got {actual}")]
    Shape {
        branch: String,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite gradient in layer {0}")]
    NonFinite(String),

    #[error("missing embedding for key `{0}`")]
    MissingEmbedding(String),

    #[error("key mismatch at row {row}: gold `{gold}` vs predicted `{predicted}`")]
    KeyMismatch {
        row: usize,
        gold: String,
        predicted: String,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            source,
        }
    }
}
