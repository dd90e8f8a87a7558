use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("empty sequence")]
    EmptySequence,

    #[error("CTC target of length {target_len} with {repeats} adjacent repeats does not fit {time_steps} time steps")]
    Infeasible {
        time_steps: usize,
        target_len: usize,
        repeats: usize,
    },

    #[error("non-finite value in {layer}")]
    NonFinite { layer: String },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("no glyph for character {0:?}")]
    UnknownGlyph(char),

    #[error("rendered width {width}px exceeds canvas width {canvas}px")]
    Width { width: usize, canvas: usize },

    #[error("encoding error: {0}")]
    Encoding(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }
}
