//! Run orchestration, persistence and plotting behind the `extruder` binary.

use std::path::PathBuf;

use thiserror::Error;

pub mod commands;
pub mod io;
pub mod plot;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] extruder_core::Error),

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{}: {source}", path.display())]
    Csv { path: PathBuf, source: csv::Error },

    #[error("{}: {msg}", path.display())]
    Format { path: PathBuf, msg: String },

    #[error("{0}")]
    Stopped(String),

    #[error("invariant violations in {0}")]
    Invariant(String),
}

impl CliError {
    /// 2 for configuration problems, 3 for solver failures, 4 for invariant
    /// violations under `--strict`, 1 for anything touching files.
    pub fn exit_code(&self) -> u8 {
        use extruder_core::Error as E;
        match self {
            CliError::Core(E::Config(_)) => 2,
            CliError::Core(E::Io(_)) | CliError::Io { .. } | CliError::Csv { .. } | CliError::Format { .. } => 1,
            CliError::Core(_) | CliError::Stopped(_) => 3,
            CliError::Invariant(_) => 4,
        }
    }
}
