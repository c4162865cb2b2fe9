use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure class, used by the command line front end to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Dataset,
    Technique,
    Io,
}

impl ErrorKind {
    /// Process exit status for a run that failed with this kind of error.
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Io => 1,
            ErrorKind::Config => 2,
            ErrorKind::Dataset => 3,
            ErrorKind::Technique => 4,
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("zero-norm vector has no direction")]
    ZeroVector,

    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("invalid descriptor: {0}")]
    InvalidDescriptor(String),

    #[error("missing or empty directory: {}", .0.display())]
    MissingDirectory(PathBuf),

    #[error("malformed manifest {}: {reason}", .path.display())]
    MalformedManifest { path: PathBuf, reason: String },

    #[error("malformed ground truth: {0}")]
    MalformedGroundTruth(String),

    #[error("unreadable image {}: {reason}", .path.display())]
    UnreadableImage { path: PathBuf, reason: String },

    #[error("query {0} has no ground-truth entry")]
    UnknownQuery(usize),

    #[error("invalid perturbation: {0}")]
    InvalidPerturbation(String),

    #[error("image {width}x{height} does not fit configuration: {reason}")]
    ConfigImageMismatch {
        width: usize,
        height: usize,
        reason: String,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("query {query} has too little history for sequence length {sequence_length}")]
    InsufficientHistory {
        query: usize,
        sequence_length: usize,
    },

    #[error("empty frame sequence")]
    EmptySequence,

    #[error("need at least {needed} samples, got {available}")]
    TooFewSamples { needed: usize, available: usize },

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),

    #[error("truncated file: {0}")]
    TruncatedPayload(String),

    #[error("malformed file: {0}")]
    MalformedFile(String),

    #[error("non-finite value in row {row}")]
    NonFiniteValue { row: usize },

    #[error("no query outcomes to evaluate")]
    EmptyOutcomes,

    #[error("technique failed: {0}")]
    Technique(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidConfig(_) | Error::InvalidPerturbation(_) => ErrorKind::Config,
            Error::InvalidImage(_)
            | Error::MissingDirectory(_)
            | Error::MalformedManifest { .. }
            | Error::MalformedGroundTruth(_)
            | Error::UnreadableImage { .. }
            | Error::UnknownQuery(_) => ErrorKind::Dataset,
            Error::Io { .. } => ErrorKind::Io,
            _ => ErrorKind::Technique,
        }
    }
}
