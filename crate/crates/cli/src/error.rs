use std::path::PathBuf;

use feather_core::simcore::SimError;
use feather_core::workload::WorkloadError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    ConfigIo { path: PathBuf, source: std::io::Error },
    #[error("{}: {msg}", path.display())]
    Config { path: PathBuf, msg: String },
    #[error("{0}")]
    Usage(String),
    #[error("invalid experiment: {0}")]
    Invalid(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {msg}", path.display())]
    Csv { path: PathBuf, msg: String },
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

impl CliError {
    /// 2 for configuration problems, 3 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::ConfigIo { .. } | CliError::Config { .. } | CliError::Usage(_) | CliError::Invalid(_) => 2,
            _ => 3,
        }
    }
}
