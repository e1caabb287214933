use std::path::PathBuf;

use crate::model::ClaimPair;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by the claim clustering toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("pair members must differ, got `{0}` twice")]
    IdenticalIds(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("zero vector{}", context.as_deref().map(|c| format!(" ({c})")).unwrap_or_default())]
    ZeroVector { context: Option<String> },

    #[error("non-finite component in vector `{0}`")]
    NonFinite(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("index is empty")]
    EmptyIndex,

    #[error("index holds {index} vectors but the embedding set holds {embeddings}")]
    IndexMismatch { index: usize, embeddings: usize },

    #[error("duplicate id `{0}`")]
    DuplicateId(String),

    #[error("unknown claim id `{0}`")]
    UnknownClaimId(String),

    #[error("unknown cluster id `{0}`")]
    UnknownClusterId(String),

    #[error(
        "id sets differ: {} only in left {:?}, {} only in right {:?}",
        only_left.len(),
        preview(only_left),
        only_right.len(),
        preview(only_right)
    )]
    IdSetMismatch {
        only_left: Vec<String>,
        only_right: Vec<String>,
    },

    #[error("annotator `{annotator}` gave no verdict for pair ({}, {})", pair.a(), pair.b())]
    MissingVerdict { annotator: String, pair: ClaimPair },

    #[error("malformed verdict in {}:{line}: {message}", path.display())]
    MalformedVerdict {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("response file {} for annotator `{annotator}` does not exist; requests written to {}", path.display(), requests.display())]
    MissingResponseFile {
        annotator: String,
        path: PathBuf,
        requests: PathBuf,
    },

    #[error("pair ({}, {}) has {have} verdicts, expected one from each of {want} annotators", pair.a(), pair.b())]
    IncompleteVerdicts {
        pair: ClaimPair,
        have: usize,
        want: usize,
    },

    #[error("annotator `{annotator}` judged pair ({}, {}) more than once", pair.a(), pair.b())]
    DuplicateVerdict { annotator: String, pair: ClaimPair },

    #[error("at least {need} items required, got {got}")]
    TooFewItems { need: usize, got: usize },

    #[error("ward linkage requires the euclidean metric")]
    WardMetricViolation,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dataset failed validation with {0} violation(s)")]
    Validation(usize),

    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn zero_vector(context: impl Into<String>) -> Self {
        Error::ZeroVector {
            context: Some(context.into()),
        }
    }

    /// Strips any stage wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}

fn preview(ids: &[String]) -> &[String] {
    &ids[..ids.len().min(10)]
}
