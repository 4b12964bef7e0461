use std::process::ExitCode;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("missing prerequisite: {0}")]
    Dependency(String),
    #[error("backend: {0}")]
    Backend(#[source] pcawalk_core::Error),
    #[error("{0}")]
    Data(#[source] pcawalk_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Config(_) => 2,
            CliError::Dependency(_) => 3,
            CliError::Backend(_) => 4,
            CliError::Data(_) => 5,
        })
    }

    pub(crate) fn config(msg: impl ToString) -> Self {
        CliError::Config(msg.to_string())
    }

    pub(crate) fn dependency(msg: impl Into<String>) -> Self {
        CliError::Dependency(msg.into())
    }
}

impl From<pcawalk_core::Error> for CliError {
    fn from(e: pcawalk_core::Error) -> Self {
        match e {
            pcawalk_core::Error::Backend(_) => CliError::Backend(e),
            other => CliError::Data(other),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
