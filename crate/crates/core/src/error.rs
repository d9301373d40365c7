use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the model.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration value violates an invariant.
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("config line {line}: key `{key}`: {msg}")]
    ConfigKey {
        line: usize,
        key: String,
        msg: String,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("experiment failed: {0}")]
    Experiment(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
