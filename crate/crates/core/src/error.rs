use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),

    #[error("malformed image {path}: {reason}")]
    MalformedImage { path: String, reason: String },

    #[error("patch size {patch_size} exceeds image extent {width}x{height}")]
    PatchTooLarge {
        patch_size: usize,
        width: usize,
        height: usize,
    },

    #[error("no readable images under {0}")]
    EmptyDataset(PathBuf),

    #[error("codebook size {k} exceeds the {distinct} distinct descriptors available")]
    TooFewDescriptors { k: usize, distinct: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("cannot build a histogram from an empty patch set")]
    EmptyPatchSet,

    #[error("factorization rank {rank} exceeds min(rows, cols) = {limit}")]
    RankTooLarge { rank: usize, limit: usize },

    #[error("objective became non-finite at iteration {iter}")]
    NonFiniteObjective { iter: usize },

    #[error("neighbor count {k} exceeds the {available} other nodes in the graph")]
    KTooLarge { k: usize, available: usize },

    #[error("cannot split {n} records into {folds} folds")]
    TooManyFolds { n: usize, folds: usize },

    #[error("labels must contain both relevant and irrelevant items")]
    DegenerateLabels,

    #[error("fold {fold}: {source}")]
    InFold { fold: usize, source: Box<Error> },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("bad config: {0}")]
    BadConfig(String),

    #[error("cannot load model: {0}")]
    ModelLoad(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit status for a failure of this class:
    /// 2 config/usage, 3 data/model, 4 internal numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InFold { source, .. } => source.exit_code(),
            Error::BadConfig(_)
            | Error::RankTooLarge { .. }
            | Error::KTooLarge { .. }
            | Error::TooManyFolds { .. } => 2,
            Error::NonFiniteObjective { .. }
            | Error::DimensionMismatch { .. }
            | Error::InvalidInput(_) => 4,
            Error::FileNotFound(_)
            | Error::MalformedImage { .. }
            | Error::PatchTooLarge { .. }
            | Error::EmptyDataset(_)
            | Error::TooFewDescriptors { .. }
            | Error::EmptyPatchSet
            | Error::DegenerateLabels
            | Error::ModelLoad(_)
            | Error::Io(_) => 3,
        }
    }

    pub(crate) fn malformed(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::MalformedImage {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
