use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate belief: {0}")]
    DegenerateBelief(String),

    #[error("numerical conditioning failure: {0}")]
    Conditioning(String),

    #[error("non-finite signal: {0}")]
    NonFiniteSignal(String),

    #[error("system output became unstable at step {step}")]
    UnstableSystem { step: usize },

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerics (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::DegenerateBelief(_)
                | Error::Conditioning(_)
                | Error::NonFiniteSignal(_)
                | Error::UnstableSystem { .. }
        )
    }
}
