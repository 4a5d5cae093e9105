use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the extraction pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("bad magic bytes in {path}: expected {expected:?}")]
    BadMagic { path: PathBuf, expected: String },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite norm at sample {sample}, kernel {kernel}")]
    NonFiniteNorm { sample: usize, kernel: usize },

    #[error("non-finite value in input")]
    NonFinite,

    #[error("invalid manifest: {0}")]
    Manifest(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("empty training split")]
    EmptyTrainingSplit,

    #[error("unknown layer {0:?}")]
    UnknownLayer(String),

    #[error("unknown split {0:?}")]
    UnknownSplit(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("invalid layer list: {0}")]
    LayerList(String),

    #[error("index {index} out of range (limit {limit})")]
    OutOfRange { index: usize, limit: usize },

    #[error("invalid program: {0}")]
    InvalidProgram(String),

    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("synthetic generator: {0}")]
    Synth(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad input data (as opposed to bad usage or bugs).
    pub fn is_data_error(&self) -> bool {
        !matches!(self, Error::InvalidParam(_) | Error::LayerList(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
