use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid constellation order {0} (need M >= 2)")]
    InvalidOrder(usize),

    #[error("bit group has length {got}, constellation needs {expected}")]
    BitGroupLength { expected: usize, got: usize },

    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("sequence length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("{count} codewords of {rows} rows do not fit in {subcarriers} subcarriers")]
    Capacity {
        count: usize,
        rows: usize,
        subcarriers: usize,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("design constraint violated: {0}")]
    Design(String),

    #[error("{0}")]
    Range(String),

    #[error("frame expects {expected} bits, got {got}")]
    FrameBits { expected: usize, got: usize },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
