use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid shape {shape:?}: {reason}")]
    InvalidShape { shape: Vec<usize>, reason: String },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("axis {axis} out of range for rank {rank}")]
    InvalidAxis { axis: usize, rank: usize },

    #[error("token id {id} outside vocabulary of size {size}")]
    VocabOverflow { id: usize, size: usize },

    #[error("training diverged: {0}")]
    TrainingDiverged(String),

    #[error("term not found in lexicon: {0}")]
    LexiconMiss(String),

    #[error("duplicate lexicon term {term:?} in category {category}")]
    LexiconConflict { term: String, category: String },

    #[error("lexicon parse error: {0}")]
    LexiconParseError(String),

    #[error("incomplete jewelry record: {0}")]
    IncompleteRecord(String),

    #[error("caption does not validate: {reason} (token {position})")]
    GrammarError { reason: String, position: usize },

    #[error("manifest line {line}: {message}")]
    ManifestParseError { line: usize, message: String },

    #[error("stratification error: {0}")]
    StratificationError(String),

    #[error("dataset error: {0}")]
    DatasetError(String),

    #[error("model was trained for {found}, not {expected}")]
    TaskMismatch { expected: String, found: String },

    #[error("not a checkpoint file: {0}")]
    CheckpointFormatError(String),

    #[error("checkpoint corrupt: {0}")]
    CheckpointCorrupt(String),

    #[error("input mismatch: {0}")]
    InputMismatch(String),

    #[error("nothing to evaluate")]
    EmptyEvaluation,

    #[error("unknown class {0:?}")]
    ClassError(String),

    #[error("image error in {path}: {message}")]
    Image { path: PathBuf, message: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(shape: &[usize], reason: impl Into<String>) -> Self {
        Error::InvalidShape {
            shape: shape.to_vec(),
            reason: reason.into(),
        }
    }
}
