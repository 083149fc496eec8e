use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid property: {0}")]
    InvalidProperty(String),

    #[error("unsupported model: {0}")]
    Unsupported(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("training aborted: {0}")]
    TrainingAbort(String),

    #[error("solver error: {0}")]
    Solver(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }
}
