use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the prompt-learning pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid scene spec: {0}")]
    InvalidSpec(String),

    #[error("layout failed for spec {spec} with seed {seed}: no placement after {retries} retries")]
    Layout { spec: String, seed: u64, retries: usize },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to load {path}: {reason}")]
    Load { path: PathBuf, reason: String },

    #[error("image codec error on {path}: {reason}")]
    Image { path: PathBuf, reason: String },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("unknown token `{0}`")]
    UnknownToken(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("token `{0}` is not marked learnable")]
    NotLearnable(String),

    #[error("sequence of {len} tokens exceeds the maximum of {max}")]
    SequenceTooLong { len: usize, max: usize },

    #[error("backbone parameters are not initialized")]
    Uninitialized,

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("loss diverged at step {step}: {value}")]
    Diverged { step: usize, value: f64 },

    #[error("frozen parameters drifted: {0}")]
    FingerprintDrift(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("bundle format error: {0}")]
    Format(String),

    #[error("checksum mismatch in {0}")]
    Checksum(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
