use std::path::PathBuf;

use crate::meta::Stage;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{0}: no triples")]
    EmptyFile(PathBuf),

    #[error("invalid relation splits: {0}")]
    Splits(String),

    #[error("unknown relation `{0}`")]
    UnknownRelation(String),

    #[error("unknown entity `{0}`")]
    UnknownEntity(String),

    #[error("relation `{relation}` has {available} triples, needs more than {shots}")]
    InsufficientTriples {
        relation: String,
        available: usize,
        shots: usize,
    },

    #[error("no negative candidates for relation `{0}`")]
    NoNegatives(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("relation meta is {found:?}, expected {expected:?}")]
    Stage { expected: Stage, found: Stage },

    #[error("true tail {0} is not in the candidate list")]
    MissingTruth(usize),

    #[error("unknown pipeline variant `{0}`")]
    UnknownVariant(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Checkpoint failures, kept apart so callers can tell them apart.
#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("bad magic bytes")]
    BadMagic,
    #[error("corrupt header: {0}")]
    CorruptHeader(String),
    #[error("payload is {found} bytes, header declares {expected}")]
    SizeMismatch { expected: usize, found: usize },
    #[error("vocabulary hash mismatch (checkpoint {stored}, graph {current})")]
    VocabMismatch { stored: String, current: String },
    #[error("checkpoint stage is `{found}`, expected `{expected}`")]
    WrongStage { expected: String, found: String },
    #[error("checkpoint has no `{0}` array")]
    MissingArray(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
