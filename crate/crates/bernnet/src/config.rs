//! Experiment configuration: JSON with a strict schema (unknown keys are
//! hard errors) and per-dataset defaults matching the training protocols
//! the experiments use. A config resolves to concrete values once, and the
//! resolved form is fingerprinted into every emitted CSV.

use crate::bernstein::{BernsteinSpec, InitMode};
use crate::data::SyntheticTarget;
use crate::error::{Error, Result};
use crate::network::{ActivationKind, Sharing};
use crate::optim::{AdamWConfig, Direction, Scheduler};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

/// Environment variable overriding the dataset root directory.
pub const DATA_ROOT_ENV: &str = "BERNNET_DATA_ROOT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    /// IDX files under `root` (train/t10k names, optionally .gz).
    Mnist {
        #[serde(default)]
        root: Option<PathBuf>,
        /// Use only the first N rows of the train split.
        #[serde(default)]
        subset_rows: Option<usize>,
    },
    HiggsCsv {
        path: PathBuf,
        #[serde(default = "default_higgs_rows")]
        max_rows: Option<usize>,
        #[serde(default = "default_val_fraction")]
        val_fraction: f64,
    },
    Synthetic {
        target: SyntheticTarget,
        #[serde(default = "default_val_fraction")]
        val_fraction: f64,
    },
}

fn default_higgs_rows() -> Option<usize> {
    Some(100_000)
}

fn default_val_fraction() -> f64 {
    0.2
}

impl DatasetConfig {
    pub fn kind_name(&self) -> &'static str {
        match self {
            DatasetConfig::Mnist { .. } => "mnist",
            DatasetConfig::HiggsCsv { .. } => "higgs",
            DatasetConfig::Synthetic { .. } => "synthetic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ActivationConfig {
    Relu,
    LeakyRelu {
        slope: f64,
    },
    Selu,
    Gelu,
    Bernstein {
        degree: usize,
        #[serde(default = "default_interval")]
        interval: (f64, f64),
        #[serde(default = "default_delta")]
        delta: f64,
        #[serde(default = "default_sharing")]
        sharing: Sharing,
        #[serde(default = "default_init")]
        init: InitMode,
    },
}

fn default_interval() -> (f64, f64) {
    (-3.0, 3.0)
}

fn default_delta() -> f64 {
    0.01
}

fn default_sharing() -> Sharing {
    Sharing::PerNeuron
}

fn default_init() -> InitMode {
    InitMode::UnitSpan
}

impl ActivationConfig {
    pub fn bernstein(degree: usize, interval: (f64, f64), delta: f64) -> Self {
        ActivationConfig::Bernstein {
            degree,
            interval,
            delta,
            sharing: Sharing::PerNeuron,
            init: InitMode::UnitSpan,
        }
    }

    pub fn to_kind(self) -> Result<(ActivationKind, InitMode)> {
        Ok(match self {
            ActivationConfig::Relu => (ActivationKind::Relu, InitMode::UnitSpan),
            ActivationConfig::LeakyRelu { slope } => {
                (ActivationKind::LeakyRelu { slope }, InitMode::UnitSpan)
            }
            ActivationConfig::Selu => (ActivationKind::Selu, InitMode::UnitSpan),
            ActivationConfig::Gelu => (ActivationKind::Gelu, InitMode::UnitSpan),
            ActivationConfig::Bernstein {
                degree,
                interval,
                delta,
                sharing,
                init,
            } => (
                ActivationKind::Bernstein {
                    spec: BernsteinSpec::new(degree, interval.0, interval.1, delta)?,
                    sharing,
                },
                init,
            ),
        })
    }

    pub fn name(&self) -> String {
        match self {
            ActivationConfig::Relu => "relu".into(),
            ActivationConfig::LeakyRelu { slope } => format!("lrelu_{slope}"),
            ActivationConfig::Selu => "selu".into(),
            ActivationConfig::Gelu => "gelu".into(),
            ActivationConfig::Bernstein { degree, interval, delta, .. } => {
                format!("bern{degree}_d{delta}_[{},{}]", interval.0, interval.1)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchitectureConfig {
    /// Explicit hidden widths; wins over depth x width.
    #[serde(default)]
    pub hidden_layers: Option<Vec<usize>>,
    #[serde(default)]
    pub depth: Option<usize>,
    #[serde(default)]
    pub width: Option<usize>,
    pub activation: ActivationConfig,
    #[serde(default)]
    pub residual: bool,
    #[serde(default = "default_true")]
    pub batch_norm: bool,
}

fn default_true() -> bool {
    true
}

impl ArchitectureConfig {
    pub fn hidden(&self) -> Result<Vec<usize>> {
        if let Some(h) = &self.hidden_layers {
            if h.is_empty() || h.contains(&0) {
                return Err(Error::Config("hidden_layers must be non-empty, positive".into()));
            }
            return Ok(h.clone());
        }
        match (self.depth, self.width) {
            (Some(d), Some(w)) if d > 0 && w > 0 => Ok(vec![w; d]),
            _ => Err(Error::Config(
                "architecture needs hidden_layers or positive depth and width".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SchedulerConfig {
    None,
    Exponential {
        gamma: f64,
        #[serde(default = "default_sched_start")]
        start_epoch: u32,
    },
    Plateau {
        #[serde(default = "default_plateau_factor")]
        factor: f64,
        #[serde(default = "default_plateau_patience")]
        patience: u32,
        #[serde(default = "default_plateau_delta")]
        min_delta: f64,
    },
}

fn default_sched_start() -> u32 {
    5
}

fn default_plateau_factor() -> f64 {
    0.5
}

fn default_plateau_patience() -> u32 {
    5
}

fn default_plateau_delta() -> f64 {
    1e-4
}

impl SchedulerConfig {
    pub fn build(&self, direction: Direction) -> Scheduler {
        match *self {
            SchedulerConfig::None => Scheduler::None,
            SchedulerConfig::Exponential { gamma, start_epoch } => {
                Scheduler::exponential(gamma, start_epoch)
            }
            SchedulerConfig::Plateau { factor, patience, min_delta } => {
                Scheduler::plateau(factor, patience, min_delta, direction)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EarlyStopConfig {
    pub patience: u32,
    pub min_delta: f64,
}

/// Which validation metric a run monitors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValMetric {
    Auc,
    Accuracy,
    Mse,
}

impl ValMetric {
    pub fn direction(self) -> Direction {
        match self {
            ValMetric::Auc | ValMetric::Accuracy => Direction::Maximize,
            ValMetric::Mse => Direction::Minimize,
        }
    }
}

/// On-disk experiment config; every optional field falls back to the
/// protocol default for its dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub dataset: DatasetConfig,
    pub architecture: ArchitectureConfig,
    #[serde(default)]
    pub learning_rate: Option<f64>,
    #[serde(default)]
    pub weight_decay: Option<f64>,
    #[serde(default)]
    pub weight_decay_start_epoch: Option<u32>,
    #[serde(default)]
    pub decay_batchnorm: Option<bool>,
    #[serde(default)]
    pub decay_bernstein: Option<bool>,
    #[serde(default)]
    pub scheduler: Option<SchedulerConfig>,
    #[serde(default)]
    pub early_stop: Option<EarlyStopConfig>,
    #[serde(default)]
    pub disable_early_stop: Option<bool>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub epochs: Option<u32>,
    #[serde(default)]
    pub batch_size: Option<usize>,
    #[serde(default)]
    pub diagnostics_stride: Option<usize>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

/// Fully resolved run description; serialization of everything except
/// `output_dir` feeds the fingerprint.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedConfig {
    pub name: String,
    pub dataset: DatasetConfig,
    pub hidden: Vec<usize>,
    pub activation: ActivationConfig,
    pub residual: bool,
    pub batch_norm: bool,
    pub optimizer: AdamWConfig,
    pub scheduler: SchedulerConfig,
    pub early_stop: Option<EarlyStopConfig>,
    pub val_metric: ValMetric,
    pub seed: u64,
    pub epochs: u32,
    pub batch_size: usize,
    pub diagnostics_stride: usize,
    #[serde(skip)]
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn resolve(&self) -> Result<ResolvedConfig> {
        let hidden = self.architecture.hidden()?;
        let (val_metric, lr, wd, wd_start, batch, sched, early): (
            ValMetric,
            f64,
            f64,
            u32,
            usize,
            SchedulerConfig,
            Option<EarlyStopConfig>,
        ) = match &self.dataset {
            DatasetConfig::Mnist { .. } => (
                ValMetric::Accuracy,
                2e-3,
                1e-4,
                1,
                64,
                SchedulerConfig::Exponential { gamma: 0.95, start_epoch: 5 },
                Some(EarlyStopConfig { patience: 15, min_delta: 1e-3 }),
            ),
            DatasetConfig::HiggsCsv { .. } => (
                ValMetric::Auc,
                1e-4,
                1e-4,
                5,
                2048,
                SchedulerConfig::Plateau {
                    factor: default_plateau_factor(),
                    patience: default_plateau_patience(),
                    min_delta: default_plateau_delta(),
                },
                Some(EarlyStopConfig { patience: 20, min_delta: 1e-4 }),
            ),
            DatasetConfig::Synthetic { target, .. } => (
                ValMetric::Mse,
                1e-1,
                0.0,
                1,
                // full-batch descent: synthetic sets are small and batch
                // statistics noise otherwise dominates late convergence
                target.samples,
                SchedulerConfig::None,
                None,
            ),
        };
        let optimizer = AdamWConfig {
            learning_rate: self.learning_rate.unwrap_or(lr),
            weight_decay: self.weight_decay.unwrap_or(wd),
            decay_start_epoch: self.weight_decay_start_epoch.unwrap_or(wd_start),
            decay_batchnorm: self.decay_batchnorm.unwrap_or(false),
            decay_bernstein: self.decay_bernstein.unwrap_or(false),
            ..AdamWConfig::default()
        };
        let early_stop = if self.disable_early_stop.unwrap_or(false) {
            None
        } else {
            self.early_stop.or(early)
        };
        let name = self.name.clone().unwrap_or_else(|| {
            format!("{}_{}", self.dataset.kind_name(), self.architecture.activation.name())
        });
        Ok(ResolvedConfig {
            name,
            dataset: self.dataset.clone(),
            hidden,
            activation: self.architecture.activation,
            residual: self.architecture.residual,
            batch_norm: self.architecture.batch_norm,
            optimizer,
            scheduler: self.scheduler.unwrap_or(sched),
            early_stop,
            val_metric,
            seed: self.seed.unwrap_or(1),
            epochs: self.epochs.unwrap_or(10),
            batch_size: self.batch_size.unwrap_or(batch),
            diagnostics_stride: self.diagnostics_stride.unwrap_or(1).max(1),
            output_dir: self.output_dir.clone().unwrap_or_else(|| PathBuf::from("runs")),
        })
    }
}

impl ResolvedConfig {
    /// Short content hash over everything that affects the run's numbers
    /// (output location excluded, so re-running into another directory
    /// produces byte-identical files).
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("resolved config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().take(6).map(|b| format!("{b:02x}")).collect()
    }
}

/// Resolve a dataset-relative path against the data-root env var.
pub fn data_root() -> Option<PathBuf> {
    std::env::var_os(DATA_ROOT_ENV).map(PathBuf::from)
}
