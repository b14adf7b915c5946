use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("index out of range: {what} = {index}, expected < {bound}")]
    Index {
        what: &'static str,
        index: usize,
        bound: usize,
    },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid probability vector: {0}")]
    InvalidDistribution(String),
    #[error("degenerate model: {0}")]
    DegenerateModel(String),
    #[error("operation requires a homogeneous model")]
    HomogeneityRequired,
    #[error("unsupported instance: {0}")]
    Unsupported(String),
    #[error("resource limit exceeded: {0}")]
    Resource(String),
    #[error("achievability constants unavailable: {0}")]
    ConstantsUnavailable(String),
    #[error("invalid configuration: {field}: {message}")]
    Config { field: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}
