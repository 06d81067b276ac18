use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("invalid UTF-8 at byte offset {offset}")]
    InvalidUtf8 { offset: usize },

    #[error("marker {marker:?} (U+{code:04X}) occurs in the input text", code = *.marker as u32)]
    MarkerCollision { marker: char },

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("infeasible vocabulary size: {0}")]
    Infeasible(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("corrupt model file: {0}")]
    CorruptModel(String),

    #[error("reference file line {line}: {msg}")]
    BadReference { line: usize, msg: String },

    #[error("no multimorphemic references (every reference has fewer than 2 morphs)")]
    NoMultimorphemicReferences,

    #[error("models use different markers ({0:?} vs {1:?})")]
    MixedMarkers(char, char),
}
