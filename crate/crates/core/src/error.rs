use thiserror::Error;

/// Errors raised across the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("domain error in series `{series}`: {msg}")]
    Domain { series: String, msg: String },

    #[error("ingestion error: {0}")]
    Ingestion(String),

    #[error("numerical rank deficiency: {0}")]
    Rank(String),

    #[error("estimation error: {0}")]
    Estimation(String),

    #[error("selection error: {0}")]
    Selection(String),

    #[error("identification error: {0}")]
    Identification(String),

    #[error("bootstrap error: {0}")]
    Bootstrap(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidInput(_) => 2,
            Error::Domain { .. } | Error::Ingestion(_) | Error::Io(_) | Error::Csv(_) | Error::Json(_) => 3,
            Error::Dimension(_)
            | Error::Rank(_)
            | Error::Estimation(_)
            | Error::Selection(_)
            | Error::Identification(_)
            | Error::Bootstrap(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
