use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on an argument was violated.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A file did not match the expected on-disk format.
    /// `offset` is the byte offset at which the problem was detected, when known.
    #[error("format error at byte {offset:?}: {msg}")]
    Format { msg: String, offset: Option<u64> },

    /// A linear-algebra or optimization step failed numerically.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// The requested operation is not defined for this configuration.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// The iterative fit diverged. The best model found so far is attached.
    #[error("fit diverged: training NMSE worsened over consecutive iterations")]
    Diverged(Box<crate::ident::FitReport>),

    /// Underlying I/O failure.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn format(msg: impl Into<String>, offset: Option<u64>) -> Self {
        Error::Format {
            msg: msg.into(),
            offset,
        }
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}
