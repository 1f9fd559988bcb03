use std::path::{Path, PathBuf};

use enginecal::baselines::BaselineConfig;
use enginecal::drive_cycle::{DriveCycleModel, GridLevels, RegimeModifiers, TraceGenerator};
use enginecal::rng::derive_seed;
use enginecal::surrogate::{AdamConfig, MlpSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Every setting of an experiment run. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub model: DriveCycleModel,
    pub traces: TraceSection,
    pub grid: GridLevels,
    pub design: DesignSection,
    /// Shift applied to the 1a cases to build the out-of-envelope regime.
    pub out_of_envelope: RegimeModifiers,
    pub network: MlpSpec,
    pub train: TrainSection,
    pub baselines: BaselineConfig,
    pub transfer: TransferSection,
    pub size_study: SizeStudySection,
    pub full_grid: FullGridSection,
    pub seeds: Seeds,
    /// `None` uses every available core.
    pub workers: Option<usize>,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: DriveCycleModel::default(),
            traces: TraceSection::default(),
            grid: GridLevels::default(),
            design: DesignSection::default(),
            out_of_envelope: RegimeModifiers {
                fuel_scale: 1.2,
                rpm_scale: 0.83,
            },
            network: MlpSpec::default(),
            train: TrainSection::default(),
            baselines: BaselineConfig::default(),
            transfer: TransferSection::default(),
            size_study: SizeStudySection::default(),
            full_grid: FullGridSection::default(),
            seeds: Seeds::default(),
            workers: None,
            out_dir: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TraceSection {
    pub generator: TraceGenerator,
    /// Distinct traces shared round-robin by the training cases.
    pub train_traces: usize,
}

impl Default for TraceSection {
    fn default() -> Self {
        Self {
            generator: TraceGenerator::default(),
            train_traces: 16,
        }
    }
}

/// Latin hypercube sizes over the grid bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DesignSection {
    pub train_points: usize,
    /// Cases sharing the first training trace.
    pub test_1a_points: usize,
    /// Cases on fresh traces.
    pub test_1b_points: usize,
}

impl Default for DesignSection {
    fn default() -> Self {
        Self {
            train_points: 64,
            test_1a_points: 4,
            test_1b_points: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 16,
            adam: AdamConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransferSection {
    pub rows: usize,
    /// Leading hidden layers kept frozen.
    pub frozen_hidden_layers: usize,
    pub epochs: usize,
    /// Also refit every baseline on train plus the adaptation rows.
    pub retrain_baselines: bool,
}

impl Default for TransferSection {
    fn default() -> Self {
        Self {
            rows: 1500,
            frozen_hidden_layers: 3,
            epochs: 50,
            retrain_baselines: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SizeStudySection {
    /// Training rows per model; multiples of the cycle length.
    pub sizes: Vec<usize>,
}

impl Default for SizeStudySection {
    fn default() -> Self {
        Self {
            sizes: vec![1500, 3000, 6000, 12000, 24000, 48000, 96000],
        }
    }
}

/// The full-factorial campaign produced by `generate --regime grid`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FullGridSection {
    pub traces: usize,
    pub trace_length: usize,
}

impl Default for FullGridSection {
    fn default() -> Self {
        Self {
            traces: 1,
            trace_length: 150,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Seeds {
    /// Trace `i` uses `traces + i`.
    pub traces: u64,
    pub train_design: u64,
    pub test_1a_design: u64,
    pub test_1b_design: u64,
    pub init: u64,
    pub shuffle: u64,
    pub transfer_split: u64,
    pub transfer_shuffle: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self {
            traces: 100,
            train_design: 1,
            test_1a_design: 2,
            test_1b_design: 3,
            init: 5,
            shuffle: 7,
            transfer_split: 11,
            transfer_shuffle: 9,
        }
    }
}

impl Seeds {
    /// Every stream derived from one base seed.
    pub fn from_base(base: u64) -> Self {
        Self {
            traces: derive_seed(base, 0),
            train_design: derive_seed(base, 1),
            test_1a_design: derive_seed(base, 2),
            test_1b_design: derive_seed(base, 3),
            init: derive_seed(base, 4),
            shuffle: derive_seed(base, 5),
            transfer_split: derive_seed(base, 6),
            transfer_shuffle: derive_seed(base, 7),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let config: Self = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let fail = |m: &str| Err(CliError::Config(m.to_string()));
        self.model.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.grid.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.traces.generator.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.network.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if self.traces.train_traces == 0 {
            return fail("traces.train_traces must be at least 1");
        }
        let d = &self.design;
        if d.train_points == 0 || d.test_1a_points == 0 || d.test_1b_points == 0 {
            return fail("design point counts must be at least 1");
        }
        if self.train.epochs == 0 || self.train.batch_size == 0 {
            return fail("train.epochs and train.batch_size must be at least 1");
        }
        if self.transfer.rows == 0 || self.transfer.epochs == 0 {
            return fail("transfer.rows and transfer.epochs must be at least 1");
        }
        if self.transfer.frozen_hidden_layers >= self.network.n_hidden() {
            return fail("transfer must leave at least one hidden layer trainable");
        }
        let m = &self.out_of_envelope;
        if !(m.fuel_scale > 0.0 && m.rpm_scale > 0.0) {
            return fail("out_of_envelope scales must be positive");
        }
        if self.full_grid.traces == 0 || self.full_grid.trace_length == 0 {
            return fail("full_grid.traces and full_grid.trace_length must be at least 1");
        }
        if self.baselines.knn_k == 0 || self.baselines.tree.min_leaf == 0 {
            return fail("baselines.knn_k and baselines.tree.min_leaf must be at least 1");
        }
        if !(self.baselines.ridge_lambda >= 0.0) {
            return fail("baselines.ridge_lambda must be non-negative");
        }
        if self.workers == Some(0) {
            return fail("workers must be at least 1");
        }
        Ok(())
    }

    pub fn workers(&self) -> usize {
        self.workers
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
    }

    /// Hex SHA-256 of the canonical JSON of this configuration.
    pub fn sha256(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn data_dir(&self) -> PathBuf {
        self.out_dir.join("data")
    }

    pub fn models_dir(&self) -> PathBuf {
        self.out_dir.join("models")
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.out_dir.join("reports")
    }
}
