use thiserror::Error;

#[derive(Debug, Error)]
pub enum MorlError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid weight vector: {0}")]
    InvalidWeight(String),

    #[error("action {action} out of range (environment has {count} actions)")]
    InvalidAction { action: usize, count: usize },

    #[error("policy set is empty")]
    EmptyPolicySet,

    #[error("replay buffer is empty")]
    EmptyBuffer,

    #[error("weight history is empty")]
    EmptyWeightHistory,

    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = MorlError> = std::result::Result<T, E>;

impl MorlError {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        MorlError::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
        if expected == got {
            Ok(())
        } else {
            Err(MorlError::Dimension { expected, got })
        }
    }
}
