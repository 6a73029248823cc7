use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("parse error at row {row}: {msg}")]
    Parse { row: usize, msg: String },

    /// Invalid configuration; `key` names the offending setting.
    #[error("invalid config `{key}`: {msg}")]
    Config { key: String, msg: String },

    #[error("not enough samples: {0}")]
    SampleSize(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("schedule error: {0}")]
    Schedule(String),

    #[error("empty superdomain: {0}")]
    EmptySuperdomain(String),

    #[error("inference error: {0}")]
    Inference(String),

    #[error("batch error: {0}")]
    Batch(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            msg: msg.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
