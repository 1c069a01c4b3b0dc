use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid data: {0}")]
    Data(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("invalid weight: {0}")]
    Weight(String),
    #[error("geometry: {0}")]
    Geometry(String),
    #[error("resolution: {0}")]
    Resolution(String),
    #[error("kernel is singular at {0:?}")]
    Singular([f64; 3]),
    #[error("configuration: {0}")]
    Config(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
