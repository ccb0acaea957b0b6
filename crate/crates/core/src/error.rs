use std::path::PathBuf;

use crate::groups::GroupVariable;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by the library.
///
/// Input problems (malformed files, duplicate keys, out-of-range fields) are
/// kept apart from runtime failures so callers can map them to different
/// exit codes; see [`Error::is_input_error`].
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: parse error: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}:{line}: duplicate key `{key}`")]
    DuplicateKey {
        path: PathBuf,
        line: usize,
        key: String,
    },

    #[error("{path}:{line}: invalid record `{key}`: {message}")]
    Validation {
        path: PathBuf,
        line: usize,
        key: String,
        message: String,
    },

    #[error("{0} is empty")]
    Empty(&'static str),

    #[error("unknown document `{0}`")]
    UnknownDocument(String),

    #[error("document `{0}` is not in the candidate pool")]
    NotInPool(String),

    #[error("document `{0}` is already in the ranked list")]
    AlreadyRanked(String),

    #[error("requested list length {requested} exceeds pool size {pool}")]
    LengthExceedsPool { requested: usize, pool: usize },

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("no identified {0} labels to impute from")]
    NoIdentifiedLabels(GroupVariable),

    #[error("no author occurrences for a {0} distribution")]
    NoAuthors(GroupVariable),

    #[error("distribution mismatch: {0}")]
    DistributionMismatch(String),

    #[error("country `{0}` has no economy mapping")]
    UnmappedCountry(String),

    #[error("query `{0}` has no relevant documents")]
    NoRelevant(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{context}: {message}")]
    Format { context: String, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad input files or arguments rather than
    /// failures during computation.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::Parse { .. }
                | Error::DuplicateKey { .. }
                | Error::Validation { .. }
                | Error::InvalidWeights(_)
                | Error::InvalidArgument(_)
                | Error::Format { .. }
                | Error::UnmappedCountry(_)
        )
    }
}
