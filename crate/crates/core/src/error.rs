use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The two 6D rotation input vectors were zero or (nearly) parallel.
    #[error("degenerate rotation input: {0}")]
    DegenerateRotation(String),

    #[error("point behind camera (z = {z})")]
    BehindCamera { z: f64 },

    #[error("mask has no foreground pixels")]
    EmptyMask,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("unknown category `{0}`")]
    UnknownCategory(String),

    #[error("category `{category}` has no exemplar {index}")]
    UnknownExemplar { category: String, index: usize },

    #[error("mesh has no part named `{0}`")]
    UnknownPart(String),

    #[error("invalid mesh: {0}")]
    Mesh(String),

    #[error("{path}: {msg}")]
    Load { path: PathBuf, msg: String },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn load(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Load {
            path: path.into(),
            msg: msg.into(),
        }
    }

    pub fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}
