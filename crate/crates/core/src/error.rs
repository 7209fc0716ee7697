use std::path::PathBuf;

use thiserror::Error;

/// Why a rank correlation could not be computed.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CorrelationError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("need at least 2 observations, got {0}")]
    TooShort(usize),
    #[error("input contains a non-finite value")]
    NonFinite,
    #[error("correlation undefined: {which} input is constant")]
    Constant { which: &'static str },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Correlation(#[from] CorrelationError),

    #[error("reference dissimilarity for pair ({i}, {j}): {source}")]
    ReferencePair {
        i: usize,
        j: usize,
        #[source]
        source: CorrelationError,
    },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("{0}")]
    InvalidInput(String),

    #[error("labeling has no {0} position")]
    MissingRole(&'static str),

    #[error("template {pattern:?} must contain exactly one slot marker, found {found}")]
    SlotCount { pattern: String, found: usize },

    #[error("invalid item set {set:?}: {reason}")]
    InvalidSet { set: String, reason: String },

    #[error("unknown built-in item set {0:?}")]
    UnknownSet(String),

    #[error("{path}:{line}: {reason}")]
    Parse {
        path: String,
        line: usize,
        reason: String,
    },

    #[error("missing embeddings for: {}", .0.join(", "))]
    Missing(Vec<String>),

    #[error("sign test is degenerate: all differences are zero (no consistent difference)")]
    DegenerateTest,

    #[error("pool {set:?} has {available} items but {requested} were requested")]
    PoolTooSmall {
        set: String,
        available: usize,
        requested: usize,
    },

    #[error("sample {index} failed: {source}")]
    Sample {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors that stem from the analysed data rather than the
    /// environment (undefined correlations, degenerate tests, and so on).
    pub fn is_statistical(&self) -> bool {
        match self {
            Error::Correlation(_) | Error::ReferencePair { .. } | Error::DegenerateTest => true,
            Error::Sample { source, .. } => source.is_statistical(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
