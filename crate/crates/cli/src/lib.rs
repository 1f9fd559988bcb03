//! Experiment orchestration behind the `enginecal` binary: regime
//! generation, training, evaluation, size studies and transfer learning.

pub mod commands;
pub mod config;
pub mod error;

use std::path::PathBuf;

pub use commands::{Method, Regime};
pub use config::ExperimentConfig;
pub use error::CliError;

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub config: Option<PathBuf>,
    pub workers: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

impl Overrides {
    pub fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        let mut config = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(w) = self.workers {
            config.workers = Some(w);
        }
        if let Some(s) = self.seed {
            config.seeds = config::Seeds::from_base(s);
        }
        if let Some(out) = &self.out {
            config.out_dir = out.clone();
        }
        config.validate()?;
        Ok(config)
    }
}
