//! Experiment drivers behind the CLI subcommands: derivative-floor runs,
//! gradient-dynamics runs, depth-scaling sweeps, and approximation-rate
//! sweeps. Every driver consumes a JSON config and emits CSV data files.

use crate::config::{
    ActivationConfig, ArchitectureConfig, DatasetConfig, ExperimentConfig, ResolvedConfig,
};
use crate::data::{modulus_estimate, synth_regression, SamplingMode, SyntheticTarget, TargetFn};
use crate::error::{Error, Result};
use crate::network::{forward, LossTarget, Mode};
use crate::train::{cmd_train, TrainOutcome};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};

/// A list of runs sharing one output directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigSet {
    pub runs: Vec<ExperimentConfig>,
}

impl ConfigSet {
    pub fn from_file(path: &Path) -> Result<ConfigSet> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    Ok(std::io::BufWriter::new(std::fs::File::create(path)?))
}

fn floor_of(cfg: &ResolvedConfig) -> f64 {
    match cfg.activation {
        ActivationConfig::Bernstein { degree, interval, delta, .. } => {
            degree as f64 * delta / (interval.1 - interval.0)
        }
        _ => 0.0,
    }
}

/// Derivative-floor experiment: per run, min |sigma'| against epochs at the
/// first/middle/last activation layers, and against depth at the final
/// epoch, both annotated with the theoretical floor column.
pub fn cmd_exp1(set: &ConfigSet, out_dir: &Path) -> Result<Vec<(ResolvedConfig, TrainOutcome)>> {
    if set.runs.is_empty() {
        println!("exp1: empty config set, nothing to do");
        return Ok(Vec::new());
    }
    let mut outcomes = Vec::new();
    for raw in &set.runs {
        let mut cfg = raw.resolve()?;
        cfg.output_dir = out_dir.join("runs");
        let (outcome, _) = cmd_train(&cfg)?;
        let floor = floor_of(&cfg);
        let fp = outcome.fingerprint.clone();

        let count = outcome.net.activation_count();
        let tracked = [0, count / 2, count.saturating_sub(1)];
        let mut f = create(&out_dir.join(format!("exp1_epochs_{}.csv", cfg.name)))?;
        writeln!(f, "# config_fingerprint={fp}")?;
        writeln!(
            f,
            "epoch,min_abs_derivative_first,min_abs_derivative_middle,min_abs_derivative_last,theoretical_floor"
        )?;
        for r in &outcome.records {
            writeln!(
                f,
                "{},{},{},{},{}",
                r.epoch,
                r.min_abs_derivative[tracked[0]],
                r.min_abs_derivative[tracked[1]],
                r.min_abs_derivative[tracked[2]],
                floor
            )?;
        }
        drop(f);

        let last = outcome.records.last().expect("at least one record");
        let mut f = create(&out_dir.join(format!("exp1_depth_{}.csv", cfg.name)))?;
        writeln!(f, "# config_fingerprint={fp}")?;
        writeln!(f, "layer_index,min_abs_derivative,theoretical_floor")?;
        for (i, v) in last.min_abs_derivative.iter().enumerate() {
            writeln!(f, "{i},{v},{floor}")?;
        }
        outcomes.push((cfg, outcome));
    }
    Ok(outcomes)
}

/// Gradient-dynamics experiment: dead ratios per layer, first-layer MAG per
/// epoch, and the spatio-temporal heatmap export.
pub fn cmd_exp2(set: &ConfigSet, out_dir: &Path) -> Result<Vec<(ResolvedConfig, TrainOutcome)>> {
    if set.runs.is_empty() {
        println!("exp2: empty config set, nothing to do");
        return Ok(Vec::new());
    }
    let mut outcomes = Vec::new();
    for raw in &set.runs {
        let mut cfg = raw.resolve()?;
        cfg.output_dir = out_dir.join("runs");
        let (outcome, _) = cmd_train(&cfg)?;
        let fp = outcome.fingerprint.clone();

        let last = outcome.records.last().expect("at least one record");
        let mut f = create(&out_dir.join(format!("exp2_dead_depth_{}.csv", cfg.name)))?;
        writeln!(f, "# config_fingerprint={fp}")?;
        writeln!(f, "layer_index,dead_ratio")?;
        for (i, v) in last.dead_ratio.iter().enumerate() {
            writeln!(f, "{i},{v}")?;
        }
        drop(f);

        let mut f = create(&out_dir.join(format!("exp2_mag_{}.csv", cfg.name)))?;
        writeln!(f, "# config_fingerprint={fp}")?;
        writeln!(f, "epoch,first_layer_mag")?;
        for r in &outcome.records {
            writeln!(f, "{},{}", r.epoch, r.first_layer_mag())?;
        }
        drop(f);

        crate::diagnostics::export_heatmap_csv(
            &outcome.records,
            &fp,
            &out_dir.join(format!("exp2_heatmap_{}.csv", cfg.name)),
        )?;
        outcomes.push((cfg, outcome));
    }
    Ok(outcomes)
}

/// Depth-scaling experiment: best training loss per configuration.
pub fn cmd_exp3(set: &ConfigSet, out_dir: &Path) -> Result<Vec<(ResolvedConfig, TrainOutcome)>> {
    if set.runs.is_empty() {
        println!("exp3: empty config set, nothing to do");
        return Ok(Vec::new());
    }
    let mut outcomes = Vec::new();
    let mut rows = Vec::new();
    for raw in &set.runs {
        let mut cfg = raw.resolve()?;
        cfg.output_dir = out_dir.join("runs");
        let (outcome, _) = cmd_train(&cfg)?;
        rows.push((
            cfg.name.clone(),
            cfg.activation.name(),
            cfg.hidden.len(),
            cfg.hidden.iter().copied().max().unwrap_or(0),
            outcome.best_train_loss,
            outcome.best_val_metric,
        ));
        outcomes.push((cfg, outcome));
    }
    let mut f = create(&out_dir.join("exp3_losses.csv"))?;
    writeln!(f, "name,activation,depth,width,best_train_loss,best_val_metric")?;
    for (name, act, depth, width, loss, metric) in &rows {
        writeln!(f, "{name},{act},{depth},{width},{loss},{metric}")?;
    }
    Ok(outcomes)
}

/// Approximation sweep config.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApproxConfig {
    pub targets: Vec<String>,
    pub depths: Vec<usize>,
    pub degrees: Vec<usize>,
    #[serde(default = "default_width")]
    pub width: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_epochs")]
    pub epochs: u32,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_domain")]
    pub domain: (f64, f64),
    #[serde(default = "default_true")]
    pub relu_baseline: bool,
}

fn default_width() -> usize {
    16
}

fn default_seeds() -> Vec<u64> {
    vec![1, 2, 3]
}

fn default_epochs() -> u32 {
    400
}

fn default_samples() -> usize {
    512
}

fn default_domain() -> (f64, f64) {
    (0.0, 1.0)
}

fn default_true() -> bool {
    true
}

impl ApproxConfig {
    pub fn from_file(path: &Path) -> Result<ApproxConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone)]
pub struct ApproxRow {
    pub target: String,
    pub activation: String,
    pub depth: usize,
    pub degree: usize,
    pub seed: u64,
    pub best_train_mse: f64,
    pub train_sup_err: f64,
    pub modulus_theory: f64,
}

fn run_config(
    target: SyntheticTarget,
    activation: ActivationConfig,
    depth: usize,
    width: usize,
    seed: u64,
    epochs: u32,
) -> Result<ResolvedConfig> {
    ExperimentConfig {
        name: None,
        dataset: DatasetConfig::Synthetic { target, val_fraction: 0.2 },
        architecture: ArchitectureConfig {
            hidden_layers: Some(vec![width; depth]),
            depth: None,
            width: None,
            activation,
            residual: false,
            batch_norm: true,
        },
        learning_rate: None,
        weight_decay: None,
        weight_decay_start_epoch: None,
        decay_batchnorm: None,
        decay_bernstein: None,
        scheduler: None,
        early_stop: None,
        disable_early_stop: None,
        seed: Some(seed),
        epochs: Some(epochs),
        batch_size: None,
        diagnostics_stride: None,
        output_dir: None,
    }
    .resolve()
}

/// Sup-norm training error of the trained parameters: max over samples and
/// output components of |prediction - target|.
fn sup_error(outcome: &TrainOutcome, target: &SyntheticTarget, seed: u64) -> Result<f64> {
    let data = synth_regression(target, seed)?;
    let mut params = outcome.params.clone();
    let (out, _) = forward(&outcome.net, &mut params, &data.features, Mode::Eval)?;
    let truth = match &data.targets {
        LossTarget::Reals(m) => m.clone(),
        _ => return Err(Error::Config("regression targets expected".into())),
    };
    let mut sup: f64 = 0.0;
    for r in 0..out.rows() {
        for c in 0..out.cols() {
            sup = sup.max((out.get(r, c) - truth.get(r, c)).abs());
        }
    }
    Ok(sup)
}

/// Theory column: the target's modulus of continuity at delta = n^-L,
/// brute-forced on a dense grid.
pub fn modulus_theory_column(function: TargetFn, domain: (f64, f64), degree: usize, depth: usize) -> Result<f64> {
    let grid = SyntheticTarget {
        function,
        domain,
        samples: 2001,
        noise: 0.0,
        sampling: SamplingMode::Grid,
    };
    let data = synth_regression(&grid, 0)?;
    let xs: Vec<f64> = (0..data.features.rows()).map(|r| data.features.get(r, 0)).collect();
    let ys = match &data.targets {
        LossTarget::Reals(m) => m.clone(),
        _ => unreachable!(),
    };
    let delta = (degree as f64).powi(-(depth as i32));
    modulus_estimate(&xs, &ys, delta)
}

/// Error-versus-depth sweep over synthetic targets.
pub fn cmd_approx(cfg: &ApproxConfig, out_dir: &Path) -> Result<Vec<ApproxRow>> {
    let mut rows = Vec::new();
    for target_id in &cfg.targets {
        let function = TargetFn::parse(target_id)?;
        for &degree in &cfg.degrees {
            for &depth in &cfg.depths {
                let theory = modulus_theory_column(function, cfg.domain, degree, depth)?;
                for &seed in &cfg.seeds {
                    let target = SyntheticTarget {
                        function,
                        domain: cfg.domain,
                        samples: cfg.samples,
                        noise: 0.0,
                        sampling: SamplingMode::Grid,
                    };
                    let mut variants =
                        vec![ActivationConfig::bernstein(degree, (-3.0, 3.0), 0.01)];
                    if cfg.relu_baseline {
                        variants.push(ActivationConfig::Relu);
                    }
                    for activation in variants {
                        let run =
                            run_config(target, activation, depth, cfg.width, seed, cfg.epochs)?;
                        let outcome = crate::train::train_in_memory(&run)?;
                        rows.push(ApproxRow {
                            target: target_id.clone(),
                            activation: activation.name(),
                            depth,
                            degree,
                            seed,
                            best_train_mse: outcome.best_train_loss,
                            train_sup_err: sup_error(&outcome, &target, seed)?,
                            modulus_theory: theory,
                        });
                    }
                }
            }
        }
    }
    let mut f = create(&out_dir.join("approx_errors.csv"))?;
    writeln!(
        f,
        "target,activation,depth,degree,seed,best_train_mse,train_sup_err,modulus_theory"
    )?;
    for r in &rows {
        writeln!(
            f,
            "{},{},{},{},{},{},{},{}",
            r.target,
            r.activation,
            r.depth,
            r.degree,
            r.seed,
            r.best_train_mse,
            r.train_sup_err,
            r.modulus_theory
        )?;
    }
    Ok(rows)
}

/// Median of a non-empty slice (sorted copy, midpoint average for even n).
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Apply CLI overrides onto a raw config before resolving.
pub fn apply_overrides(
    cfg: &mut ExperimentConfig,
    seed: Option<u64>,
    out: Option<&PathBuf>,
    subset_rows: Option<usize>,
) {
    if let Some(s) = seed {
        cfg.seed = Some(s);
    }
    if let Some(o) = out {
        cfg.output_dir = Some(o.clone());
    }
    if let Some(n) = subset_rows {
        match &mut cfg.dataset {
            DatasetConfig::Mnist { subset_rows, .. } => *subset_rows = Some(n),
            DatasetConfig::HiggsCsv { max_rows, .. } => *max_rows = Some(n),
            DatasetConfig::Synthetic { target, .. } => target.samples = n,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_handles_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn modulus_theory_shrinks_with_depth() {
        let a = modulus_theory_column(TargetFn::Sin { cycles: 4 }, (0.0, 1.0), 5, 1).unwrap();
        let b = modulus_theory_column(TargetFn::Sin { cycles: 4 }, (0.0, 1.0), 5, 2).unwrap();
        let c = modulus_theory_column(TargetFn::Sin { cycles: 4 }, (0.0, 1.0), 5, 3).unwrap();
        assert!(a > b && b > c, "{a} {b} {c}");
        // delta=1/5: sin4 swings through a full period in 0.2, so the
        // modulus saturates at the global oscillation
        assert!((a - 2.0).abs() < 1e-3);
    }

    #[test]
    fn empty_config_set_is_noop() {
        let dir = tempfile::tempdir().unwrap();
        let set = ConfigSet { runs: vec![] };
        let out = cmd_exp1(&set, dir.path()).unwrap();
        assert!(out.is_empty());
    }
}
