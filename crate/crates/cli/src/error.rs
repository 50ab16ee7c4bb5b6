use thiserror::Error;

/// Exit 1 for anything wrong with the invocation or its inputs, 2 for
/// failures while running.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("run failed: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl From<aga_core::Error> for CliError {
    fn from(e: aga_core::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}
