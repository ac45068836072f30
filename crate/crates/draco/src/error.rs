use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input: bad dimensions, out-of-range values, invalid config.
    #[error("invalid argument: {0}")]
    Invalid(String),
    /// A metric, policy, observation, or environment combination that cannot work together.
    #[error("incompatible: {0}")]
    Incompatible(String),
    /// Training produced non-finite values.
    #[error("diverged: {0}")]
    Diverged(String),
    /// A persisted artifact violates its format contract.
    #[error("format: {0}")]
    Format(String),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub fn incompatible(msg: impl Into<String>) -> Self {
        Error::Incompatible(msg.into())
    }

    pub fn diverged(msg: impl Into<String>) -> Self {
        Error::Diverged(msg.into())
    }

    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    pub fn io(path: impl Into<std::path::PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
