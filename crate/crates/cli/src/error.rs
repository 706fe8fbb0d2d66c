use thiserror::Error;

/// Failure classes, each with its own process exit status.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("data: {0}")]
    Data(String),
    #[error("numerical: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl From<jdvol::Error> for CliError {
    fn from(e: jdvol::Error) -> Self {
        match e {
            jdvol::Error::InvalidArgument(m) => CliError::Usage(m),
            jdvol::Error::Data(m) => CliError::Data(m),
            e @ (jdvol::Error::Numerical(_) | jdvol::Error::Simulation { .. }) => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
