use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("every rollout cost is non-finite")]
    NonFiniteCosts,

    #[error("actuation probabilities sum to zero")]
    ZeroProbabilityMass,

    #[error("unknown scenario `{name}` (known scenarios: {known}; or pass a path to a config file)")]
    UnknownScenario { name: String, known: String },

    #[error("bad override `{spec}`: {reason}")]
    Override { spec: String, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {reason}")]
    Parse { path: PathBuf, reason: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, reason: impl ToString) -> Self {
        Error::Parse { path: path.into(), reason: reason.to_string() }
    }
}
