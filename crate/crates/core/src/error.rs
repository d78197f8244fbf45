use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("length mismatch in {op}: {left} vs {right}")]
    Length {
        op: &'static str,
        left: usize,
        right: usize,
    },

    #[error("backward called on an empty tape or before its root was recorded")]
    BackwardBeforeForward,

    #[error("backward root must be a 1x1 node, got {0:?}")]
    NonScalarRoot((usize, usize)),

    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGradient(String),

    #[error("non-finite value produced by block {block}")]
    NonFiniteBlock { block: usize },

    #[error("non-finite training loss at iteration {iteration}")]
    NonFiniteLoss { iteration: usize },

    #[error("invalid topology: {0}")]
    Topology(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("flat seasonal history: MASE denominator below guard")]
    FlatSeasonalHistory,

    #[error("zero reference value for {0}")]
    ZeroReference(&'static str),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("series `{id}`: {reason}")]
    Series { id: String, reason: String },

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("no frequency mapping for {source_name} -> {target}; valid targets: {valid}")]
    UnmappedFrequency {
        source_name: String,
        target: String,
        valid: String,
    },

    #[error("{path}: line {line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("kink proximity unresolved after {0} jitters")]
    KinkProximity(usize),

    #[error("io error on {path}: {source}")]
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
}
