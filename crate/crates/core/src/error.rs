use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum EqError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("trajectory diverged at step {step} (param norm {norm:.3e})")]
    Diverged { step: usize, norm: f64 },

    #[error("compatibility condition violated (commutator norm {0:.3e})")]
    Incompatible(f64),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, EqError>;
