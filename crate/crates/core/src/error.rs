use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the inpainting library.
#[derive(Debug, Error)]
pub enum Error {
    /// A tensor or map did not have the expected extent along `axis`.
    #[error("dimension mismatch on {axis}: expected {expected}, got {actual}")]
    Dimension {
        axis: &'static str,
        expected: usize,
        actual: usize,
    },

    /// Shapes that cannot be reconciled, described in prose.
    #[error("shape error: {0}")]
    Shape(String),

    /// An argument is outside its valid domain.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A combination of otherwise valid arguments that this implementation does not handle.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// The input makes the requested quantity undefined (e.g. dividing by an all-zero reference).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image codec error on {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    /// A weight archive is malformed or truncated.
    #[error("weight archive format error: {0}")]
    Format(String),

    /// A weight archive does not match the network it is loaded into.
    #[error("weight mismatch: {0}")]
    WeightMismatch(String),

    #[error("report serialization error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn dim(axis: &'static str, expected: usize, actual: usize) -> Self {
        Error::Dimension {
            axis,
            expected,
            actual,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
