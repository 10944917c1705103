use std::path::PathBuf;

/// Errors produced by the expandnet toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("layer {index} ({kind}): {message}")]
    Layer {
        index: usize,
        kind: &'static str,
        message: String,
    },

    #[error("invalid expansion plan: {0}")]
    Plan(String),

    #[error("cannot compress: {0}")]
    Compression(String),

    #[error("composition would not be exact: {0}")]
    Inexact(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("format error in {path} at byte offset {offset}: {message}")]
    Format {
        path: PathBuf,
        offset: u64,
        message: String,
    },

    #[error("model is corrupt: {0}")]
    Corrupt(String),

    #[error("unsupported model format: {0}")]
    Version(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("manifest serialization: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
