use thiserror::Error;

/// Error type shared by the whole crate.
///
/// `Argument` maps to CLI exit code 2, `State` to exit code 3.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("invalid state: {0}")]
    State(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub fn state(msg: impl Into<String>) -> Self {
        Error::State(msg.into())
    }

    /// Process exit code for the CLI surface.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Argument(_) | Error::Io(_) => 2,
            Error::State(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
