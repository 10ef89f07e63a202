use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("tensor shape {shape:?} does not match {len} data elements")]
    ShapeData { shape: Vec<usize>, len: usize },

    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    Shape {
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("malformed network document: {0}")]
    MalformedNetwork(String),

    #[error("unsupported layer kind `{kind}` at layer {layer}")]
    UnsupportedLayer { layer: usize, kind: String },

    #[error("shape mismatch at layer {layer}: {detail}")]
    LayerShape { layer: usize, detail: String },

    #[error("invalid condition ({layer}, {channel}): {reason}")]
    InvalidCondition {
        layer: usize,
        channel: usize,
        reason: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("{0}")]
    Format(String),

    #[error("i/o error on {path}: {source}")]
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

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
