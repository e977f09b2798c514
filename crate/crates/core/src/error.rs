use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// No cluster holds both a head and a neck, so image scale is unknown.
    #[error("head length unavailable: no cluster has both a head and a neck")]
    HeadLengthUnavailable,

    #[error("oracle budget exceeded: {0}")]
    BudgetExceeded(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
