use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors produced by the convsent library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },

    #[error("unknown label '{label}' at line {line}")]
    UnknownLabel { label: String, line: usize },

    #[error("{0}")]
    Embedding(String),

    #[error("empty token sequence")]
    EmptyTokens,

    #[error("filter wider than input (width {width}, input length {len})")]
    FilterTooWide { width: usize, len: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparams(String),

    #[error("empty dataset: {0}")]
    EmptyDataset(&'static str),

    #[error("not a model file")]
    NotAModelFile,

    #[error("unsupported version {found} (expected {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },

    #[error("truncated model file")]
    Truncated,

    #[error("corrupt model header: {0}")]
    CorruptHeader(String),

    #[error("only {selectable} mutually diverse candidates selectable, {wanted} requested")]
    InsufficientCandidates { wanted: usize, selectable: usize },

    #[error("candidate {index} failed: {source}")]
    Candidate {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("ensemble member mismatch: {0}")]
    MemberMismatch(String),

    #[error("manifest: {0}")]
    Manifest(String),

    #[error("config: {0}")]
    Config(String),

    #[error("id mismatch: {0}")]
    IdMismatch(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the data handed to the library (bad files,
    /// bad formats) as opposed to invalid settings or internal failures.
    pub fn is_data_error(&self) -> bool {
        match self {
            Error::Io { .. }
            | Error::MalformedLine { .. }
            | Error::UnknownLabel { .. }
            | Error::Embedding(_)
            | Error::EmptyTokens
            | Error::EmptyDataset(_)
            | Error::NotAModelFile
            | Error::UnsupportedVersion { .. }
            | Error::Truncated
            | Error::CorruptHeader(_)
            | Error::InsufficientCandidates { .. }
            | Error::MemberMismatch(_)
            | Error::Manifest(_)
            | Error::IdMismatch(_) => true,
            Error::Candidate { source, .. } => source.is_data_error(),
            _ => false,
        }
    }
}
