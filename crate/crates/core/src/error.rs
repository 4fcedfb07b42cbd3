use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("{path}: unsupported format version {found} (this build reads version {expected})")]
    UnsupportedVersion {
        path: PathBuf,
        found: u32,
        expected: u32,
    },

    #[error("{file}:{line}: unknown item id {id:?}")]
    UnknownItem { id: String, file: PathBuf, line: usize },

    #[error("{file}: row {row}, column {col}: non-finite feature value {value}")]
    NonFiniteFeature {
        file: PathBuf,
        row: usize,
        col: usize,
        value: f32,
    },

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        found: usize,
    },

    #[error("degenerate embedding: pre-normalization norm {norm:e} is below 1e-12")]
    DegenerateEmbedding { norm: f64 },

    #[error("unknown relation between categories {head:?} and {tail:?}")]
    UnknownRelation { head: String, tail: String },

    #[error("non-finite values in {tensor}")]
    NonFinite { tensor: String },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn dims(context: impl Into<String>, expected: usize, found: usize) -> Self {
        Error::DimensionMismatch {
            context: context.into(),
            expected,
            found,
        }
    }
}
