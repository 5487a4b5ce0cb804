//! Crate-wide error type.

use std::fmt;

use thiserror::Error;

/// Pipeline stage names used for error attribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Rewrite,
    FtsSearch,
    VectorSearch,
    Embed,
    Fusion,
    Rerank,
    Generate,
    Judge,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Stage::Rewrite => "rewrite",
            Stage::FtsSearch => "fts-search",
            Stage::VectorSearch => "vector-search",
            Stage::Embed => "embed",
            Stage::Fusion => "fusion",
            Stage::Rerank => "rerank",
            Stage::Generate => "generate",
            Stage::Judge => "judge",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed record at line {line}: {message}")]
    MalformedRecord { line: usize, message: String },

    #[error("duplicate document id: {0}")]
    DuplicateDocId(String),

    #[error("duplicate chunk ref: {0}")]
    DuplicateChunkRef(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimMismatch { expected: usize, actual: usize },

    #[error("corrupt index file {path}: {message}")]
    CorruptIndex { path: String, message: String },

    #[error("invalid ranked list: {0}")]
    InvalidRankedList(String),

    #[error("invalid input: {0}")]
    Validation(String),

    #[error("[{stage}] transport failure: {message}")]
    Transport { stage: Stage, message: String },

    #[error("[{stage}] integrity violation: {message}")]
    Integrity { stage: Stage, message: String },

    #[error("dataset too small: need {required} records, have {available}")]
    InsufficientDataset { required: usize, available: usize },
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn transport(stage: Stage, message: impl Into<String>) -> Self {
        Error::Transport {
            stage,
            message: message.into(),
        }
    }

    pub fn integrity(stage: Stage, message: impl Into<String>) -> Self {
        Error::Integrity {
            stage,
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
