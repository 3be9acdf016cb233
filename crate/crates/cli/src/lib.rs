//! Experiment driver for learned optimizers: configs, dataset files,
//! optimizer files and CSV output around `metaopt-core`.

pub mod config;
pub mod csv;
pub mod experiment;
pub mod format;
pub mod idx;
pub mod ini;

pub use config::ExperimentConfig;
pub use experiment::Workers;
pub use ini::ConfigError;

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(ConfigError),
    #[error(transparent)]
    Idx(#[from] idx::IdxError),
    #[error("{path}: {cause}")]
    Format { path: PathBuf, cause: format::FormatError },
    #[error("{path}: {cause}")]
    Io { path: PathBuf, cause: std::io::Error },
    #[error(transparent)]
    Core(#[from] metaopt_core::Error),
    #[error("every run diverged: {0}")]
    Diverged(String),
    #[error("{0}")]
    Missing(String),
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        Self::Config(e)
    }
}

impl CliError {
    /// 2 for configuration problems, 1 for everything that fails at run time.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
