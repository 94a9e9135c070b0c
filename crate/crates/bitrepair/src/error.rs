//! Error types shared across the pipeline.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("line count mismatch between {left} ({left_count} lines) and {right} ({right_count} lines)")]
    LineCountMismatch {
        left: String,
        left_count: usize,
        right: String,
        right_count: usize,
    },

    #[error("{path}:{line}: invalid UTF-8 byte sequence")]
    Encoding { path: PathBuf, line: usize },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("table is missing pair id {0}")]
    MissingId(u64),

    #[error("table contains pair id {0} more than once")]
    DuplicateId(u64),

    #[error("pair id {id} is out of range (expected 0..{expected})")]
    UnknownId { id: u64, expected: u64 },

    #[error("{path}:{line}: score is not finite")]
    NonFiniteScore { path: PathBuf, line: usize },

    #[error("{path}:{line}: malformed row: {message}")]
    MalformedRow {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("no score for pair id {0}")]
    MissingScore(u64),

    #[error("no embedding for pair id {0}")]
    MissingEmbedding(u64),

    #[error("vector dimensions differ: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("cosine is undefined for a zero-norm vector")]
    ZeroVector,

    #[error("cannot embed empty text")]
    EmptyText,

    #[error("alignment link {link_source}-{link_target} out of bounds at line {line} (source has {source_len} tokens, target has {target_len})")]
    LinkOutOfBounds {
        line: usize,
        link_source: u32,
        link_target: u32,
        source_len: usize,
        target_len: usize,
    },

    #[error("scorer service unavailable after {attempts} attempts: {message}")]
    ServiceUnavailable { attempts: u32, message: String },

    #[error("scorer service protocol error: {0}")]
    ProtocolError(String),

    #[error("scorer service reply is missing {missing} of {requested} pair ids (first missing: {first_missing})")]
    IncompleteResponse {
        requested: usize,
        missing: usize,
        first_missing: u64,
    },

    #[error("hypothesis and reference counts differ: {hypotheses} vs {references}")]
    LengthMismatch {
        hypotheses: usize,
        references: usize,
    },

    #[error("cannot evaluate an empty corpus")]
    EmptyCorpus,

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("configuration invalid:\n{}", format_validation(.0))]
    Validation(Vec<crate::pipeline::ValidationError>),

    #[error("stage {index} ({kind}) failed: {source}")]
    Stage {
        index: usize,
        kind: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 1 validation, 2 data, 3 external service.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_) | Error::Parameter(_) => 1,
            Error::ServiceUnavailable { .. }
            | Error::ProtocolError(_)
            | Error::IncompleteResponse { .. } => 3,
            Error::Stage { source, .. } => source.exit_code(),
            _ => 2,
        }
    }
}

fn format_validation(errors: &[crate::pipeline::ValidationError]) -> String {
    errors
        .iter()
        .map(|e| format!("  - {e}"))
        .collect::<Vec<_>>()
        .join("\n")
}
