use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed embedding file: {0}")]
    MalformedHeader(String),

    #[error("truncated payload: expected {expected} values, found {found}")]
    TruncatedPayload { expected: usize, found: usize },

    #[error("non-finite entry at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("invalid shape: {0}")]
    Shape(String),

    #[error("line {line}: {message}")]
    PartitionParse { line: usize, message: String },

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("row {row} has zero norm; cosine distance is undefined")]
    ZeroNormRow { row: usize },

    #[error("partition has {found} non-empty clusters; at least 2 are required")]
    TooFewClusters { found: usize },

    #[error("class {class} is absent from the training split")]
    ClassMissingFromTrain { class: usize },

    #[error("linear probe diverged: non-finite loss at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("correlation error: {0}")]
    Correlation(String),

    #[error("milestone {id}: {source}")]
    Milestone {
        id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("report error: {0}")]
    Report(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn in_milestone(self, id: &str) -> Self {
        Error::Milestone {
            id: id.to_string(),
            source: Box::new(self),
        }
    }
}
