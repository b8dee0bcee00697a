use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller violated an operation's documented precondition.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// An invalid parameter value (unknown source kind, bad channel count, ...).
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// Well-formed input that fails a domain rule.
    #[error("validation failed: {0}")]
    Validation(String),

    /// Malformed file contents.
    #[error("format error: {0}")]
    Format(String),

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// An API was used out of order, e.g. backward without a training trace.
    #[error("contract violated: {0}")]
    Contract(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("training aborted: {0}")]
    Training(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

macro_rules! ensure {
    ($cond:expr, $variant:ident, $($fmt:tt)+) => {
        if !$cond {
            return Err($crate::error::Error::$variant(format!($($fmt)+)));
        }
    };
}
pub(crate) use ensure;
