use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error(transparent)]
    Core(#[from] spdmbi_core::Error),

    #[error("{0} invariant(s) failed")]
    Invariants(usize),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use spdmbi_core::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Io { .. } => 4,
            CliError::Invariants(_) => 5,
            CliError::Core(E::Accuracy(_)) => 3,
            CliError::Core(E::Io(_)) => 4,
            CliError::Core(_) => 2,
        }
    }
}

pub fn config(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}
