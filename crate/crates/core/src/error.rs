use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("invalid argument: {0}")]
    Usage(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("capacity exceeded for {what}: limit {limit}, requested {requested}")]
    Capacity {
        what: &'static str,
        limit: usize,
        requested: usize,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error(
        "{stage} diverged: loss {loss:.3e} exceeds 10x the initial {initial:.3e}; reduce the step size"
    )]
    Divergence {
        stage: &'static str,
        loss: f64,
        initial: f64,
    },

    #[error("bias distribution support: {0}")]
    Support(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code for this error class: 1 check/runtime failure,
    /// 2 usage error, 3 capacity error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Capacity { .. } => 3,
            Error::Usage(_)
            | Error::DimensionMismatch { .. }
            | Error::Degenerate(_)
            | Error::Parse(_)
            | Error::Support(_) => 2,
            _ => 1,
        }
    }

    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }
}
