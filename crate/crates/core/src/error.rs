use std::path::PathBuf;

/// Errors produced by the library.
///
/// The CLI maps [`Error::Io`] to exit code 3 and every other variant to 2.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("numerical error at blob {index}: {reason}")]
    Numerical { index: usize, reason: String },

    /// Malformed or truncated encoded input. `offset` is the byte position at
    /// which decoding failed.
    #[error("format error at byte {offset}: {message}")]
    Format { offset: usize, message: String },

    /// Well-formed input whose decoded values are unusable.
    #[error("data error at element {index}: {message}")]
    Data { index: usize, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn format(offset: usize, message: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: message.into(),
        }
    }

    pub(crate) fn validation(message: impl Into<String>) -> Self {
        Error::Validation(message.into())
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidParameter(message.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the underlying filesystem rather than of the data.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
