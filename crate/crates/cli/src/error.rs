use corridor_core::Error as CoreError;

/// Process exit codes. These are part of the command-line contract.
pub const EXIT_OK: u8 = 0;
pub const EXIT_RUNTIME: u8 = 1;
pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_DIVERGENCE: u8 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Divergence(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Divergence(_) => EXIT_DIVERGENCE,
            CliError::Io(_) | CliError::Csv(_) | CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Config { .. } | CoreError::InfeasibleDuration { .. } | CoreError::Oversaturated(_) => {
                CliError::Validation(e.to_string())
            }
            CoreError::Divergence(_) => CliError::Divergence(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}
