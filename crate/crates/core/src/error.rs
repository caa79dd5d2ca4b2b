use thiserror::Error;

#[derive(Debug, Error)]
pub enum TirError {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid model document: {0}")]
    Document(String),

    #[error("dataset error: {0}")]
    Data(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("search failed: {0}")]
    Search(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, TirError>;
