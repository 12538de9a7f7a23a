use std::process::ExitCode;

/// A failure together with the exit code it maps to.
#[derive(Debug)]
pub enum CliError {
    /// Bad arguments, configuration or input files: exit code 2.
    Usage(anyhow::Error),
    /// Failure while running a valid request: exit code 1.
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Usage(_) => ExitCode::from(2),
            CliError::Runtime(_) => ExitCode::from(1),
        }
    }

    pub fn inner(&self) -> &anyhow::Error {
        match self {
            CliError::Usage(e) | CliError::Runtime(e) => e,
        }
    }
}

pub trait Failure<T> {
    fn usage(self) -> Result<T, CliError>;
    fn runtime(self) -> Result<T, CliError>;
}

impl<T, E: Into<anyhow::Error>> Failure<T> for Result<T, E> {
    fn usage(self) -> Result<T, CliError> {
        self.map_err(|e| CliError::Usage(e.into()))
    }

    fn runtime(self) -> Result<T, CliError> {
        self.map_err(|e| CliError::Runtime(e.into()))
    }
}
