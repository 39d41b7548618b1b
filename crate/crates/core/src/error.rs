use thiserror::Error;

/// Errors raised by the simulator.
///
/// Variants are grouped by category so that the CLI can map them onto
/// distinct exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("physics integration diverged at step {step}")]
    Diverged { step: usize },

    #[error("checkpoint format error: {0}")]
    Checkpoint(String),

    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    Shape {
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),
}

impl Error {
    /// Process exit code for this error category.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Toml(_) => 2,
            Error::Diverged { .. } => 3,
            Error::Checkpoint(_) | Error::Shape { .. } => 4,
            Error::Io(_) | Error::Csv(_) => 5,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
