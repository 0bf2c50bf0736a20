use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, config file or dataset. Exit code 2.
    #[error("{0}")]
    Usage(String),
    /// Failure while running a valid request. Exit code 1.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Usage(_) => 2,
            Self::Runtime(_) => 1,
        }
    }
}

impl From<cwiv_core::Error> for CliError {
    fn from(e: cwiv_core::Error) -> Self {
        use cwiv_core::Error as E;
        match e {
            E::Config(_) => Self::Usage(e.to_string()),
            _ => Self::Runtime(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
