use thiserror::Error;

/// Errors raised across the simulator, the sensitivity layer and the learner.
#[derive(Debug, Error)]
pub enum Error {
    #[error("singular topology: {0}")]
    SingularTopology(String),
    #[error("removing line {0} islands the network")]
    IslandingOutage(usize),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("illegal action: {0}")]
    IllegalAction(String),
    #[error("episode already finished")]
    EpisodeFinished,
    #[error("replay buffer is empty")]
    EmptyBuffer,
    #[error("non-finite gradient encountered")]
    NonFiniteGradient,
    #[error("checkpoint mismatch: {0}")]
    CheckpointMismatch(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
