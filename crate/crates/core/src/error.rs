use thiserror::Error;

/// Errors raised across the planning library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("instance too large: {what} is {actual}, limit is {limit}")]
    TooLarge {
        what: &'static str,
        actual: u128,
        limit: u128,
    },

    #[error("degenerate filter update: posterior mass {0:e} below floor")]
    DegenerateUpdate(f64),

    #[error("record integrity: {0}")]
    Integrity(String),

    #[error("planner failure: {0}")]
    Planner(String),

    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
