use std::path::PathBuf;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("structural integrity violation: {0}")]
    Structure(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("dump format error: {0}")]
    Format(String),

    #[error("cannot rescale response: {0}")]
    Rescaling(String),

    #[error("no valid split: every column has fewer than 2 distinct values")]
    NoValidSplit,

    #[error("degenerate response: {0}")]
    DegenerateResponse(String),

    #[error("empty posterior: every retained iteration contains only stumps")]
    EmptyPosterior,

    #[error("wrong task: expected a {expected} fit")]
    WrongTask { expected: &'static str },

    #[error("factor mapping error: {0}")]
    FactorMapping(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("alignment undefined: {0}")]
    AlignmentUndefined(String),

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
