use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Config file failed validation; every violation is listed, not just the first.
    #[error("invalid config:\n{}", .0.join("\n"))]
    ConfigInvalid(Vec<String>),

    /// A regularization schedule violates a Theorem-level constraint.
    #[error("inadmissible schedule:\n{}", .0.join("\n"))]
    ScheduleInadmissible(Vec<String>),

    /// Numerical failure (blow-up, rejection-sampling exhaustion, ...).
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Process exit code for the CLI: 2 config, 3 schedule, 4 numerical, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::ConfigInvalid(_) | Error::InvalidArgument(_) | Error::Parse(_) => 2,
            Error::ScheduleInadmissible(_) => 3,
            Error::Numerical(_) => 4,
            Error::Io(_) => 1,
        }
    }
}
