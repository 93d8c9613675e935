use thiserror::Error;

/// Crate-wide error type. Variants map onto the process exit-code classes
/// used by the CLI: validation, data, and numeric failures.
#[derive(Debug, Error)]
pub enum Error {
    #[error("validation: {0}")]
    Validation(String),
    #[error("geometry: {0}")]
    Geometry(String),
    #[error("sampling: {0}")]
    Sampling(String),
    #[error("lookup: {0}")]
    Lookup(String),
    #[error("format: {0}")]
    Format(String),
    #[error("config: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error("numeric: {0}")]
    Numeric(String),
    #[error("state: {0}")]
    State(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
