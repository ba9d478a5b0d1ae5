use thiserror::Error;

/// Failures surfaced by the command-line front end, each tied to an exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),

    #[error("{0}")]
    Degenerate(String),

    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn input(msg: impl Into<String>) -> Self {
        CliError::Input(msg.into())
    }

    /// 2 for bad input, 3 for a degenerate fit, 4 for numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Degenerate(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }

    /// Wraps a library error with `context`, keeping its class.
    pub fn from_core(err: ghmix::Error, context: &str) -> Self {
        let msg = if context.is_empty() {
            err.to_string()
        } else {
            format!("{context}: {err}")
        };
        match err {
            ghmix::Error::InvalidInput(_) | ghmix::Error::DimensionMismatch { .. } => CliError::Input(msg),
            ghmix::Error::Degenerate { .. } => CliError::Degenerate(msg),
            ghmix::Error::Domain(_) | ghmix::Error::Numeric(_) => CliError::Numeric(msg),
        }
    }
}

impl From<ghmix::Error> for CliError {
    fn from(err: ghmix::Error) -> Self {
        CliError::from_core(err, "")
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::Input(err.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
