use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("input shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("activation cache does not match model: {0}")]
    Cache(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("lifecycle error: {0}")]
    Lifecycle(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("replay buffer not ready: {have} transitions, need {need}")]
    NotReady { have: usize, need: usize },

    #[error("empty dataset: {0}")]
    EmptyDataset(&'static str),

    #[error("model is untrained: {0}")]
    Untrained(&'static str),

    #[error("format error: {0}")]
    Format(String),

    #[error("malformed record at {path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
