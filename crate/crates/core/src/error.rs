use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("parity error: {0}")]
    Parity(String),
    #[error("chart mismatch: {0}")]
    ChartMismatch(String),
    #[error("not invertible: {0}")]
    NotInvertible(String),
    #[error("not superconformal: {0}")]
    NotSuperconformal(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("backend mismatch: {0}")]
    Backend(String),
    #[error("schema error at {location}: {message}")]
    Schema { location: String, message: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
