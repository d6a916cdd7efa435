use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("index out of bounds: {what} {index} >= {len}")]
    OutOfBounds {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("numeric abort at entry {entry} (row {row}, col {col}): {detail}")]
    NumericAbort {
        entry: usize,
        row: usize,
        col: usize,
        detail: String,
    },

    #[error("all {0} particles aborted")]
    SwarmCollapsed(usize),

    #[error("model format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures caused by non-finite arithmetic during training.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::NumericAbort { .. } | Error::SwarmCollapsed(_))
    }
}
