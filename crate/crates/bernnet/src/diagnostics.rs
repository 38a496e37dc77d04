//! Gradient-health instrumentation: per-layer minimum |sigma'|, dead-neuron
//! ratios, first-layer mean absolute gradient (MAG), classification
//! metrics, and the CSV exports behind the experiment figures.

use crate::error::{Error, Result};
use crate::network::{ActivationKind, ForwardCache, Network, SignalStats};
use crate::numcore::Matrix;
use std::io::Write;
use std::path::Path;

/// When a neuron counts as dead: its batch-mean |sigma'| sits below the
/// threshold. Epoch values average the per-batch ratios.
#[derive(Debug, Clone, Copy)]
pub struct DeadNeuronPolicy {
    pub threshold: f64,
}

impl Default for DeadNeuronPolicy {
    fn default() -> Self {
        DeadNeuronPolicy { threshold: 1e-7 }
    }
}

/// Dead-neuron ratio of one activation layer's derivative matrix
/// (rows = samples, cols = neurons).
pub fn dead_ratio_of(derivative: &Matrix, policy: &DeadNeuronPolicy) -> f64 {
    let n = derivative.rows() as f64;
    let width = derivative.cols();
    if width == 0 || derivative.rows() == 0 {
        return 0.0;
    }
    let mut dead = 0usize;
    for j in 0..width {
        let mut acc = 0.0;
        for r in 0..derivative.rows() {
            acc += derivative.get(r, j).abs();
        }
        if acc / n < policy.threshold {
            dead += 1;
        }
    }
    dead as f64 / width as f64
}

/// Minimum |sigma'| over all entries of one derivative matrix.
pub fn min_abs_derivative_of(derivative: &Matrix) -> f64 {
    derivative
        .data()
        .iter()
        .fold(f64::INFINITY, |m, v| m.min(v.abs()))
}

/// Per-activation-layer minimum |sigma'| for one train-mode batch.
pub fn min_abs_derivative(cache: &ForwardCache) -> Vec<f64> {
    cache
        .activation_derivatives()
        .iter()
        .map(|d| min_abs_derivative_of(d))
        .collect()
}

/// Per-activation-layer dead ratios for one train-mode batch.
pub fn dead_neuron_ratio(cache: &ForwardCache, policy: &DeadNeuronPolicy) -> Vec<f64> {
    cache
        .activation_derivatives()
        .iter()
        .map(|d| dead_ratio_of(d, policy))
        .collect()
}

/// One epoch's health snapshot.
#[derive(Debug, Clone)]
pub struct DiagnosticsRecord {
    pub epoch: u32,
    /// Per activation layer, min over the epoch's batches.
    pub min_abs_derivative: Vec<f64>,
    /// Per activation layer, mean of per-batch ratios.
    pub dead_ratio: Vec<f64>,
    /// Per clamp layer, mean saturation fraction.
    pub clamp_saturation: Vec<f64>,
    /// Mean |dL_sample / d activation| per activation layer.
    pub mag_per_layer: Vec<f64>,
    pub train_loss: f64,
    pub val_metric: f64,
    pub learning_rate: f64,
    /// Result of the per-epoch diagonal-bound check over Bernstein layers.
    pub diagonal_bound_holds: bool,
}

impl DiagnosticsRecord {
    pub fn first_layer_mag(&self) -> f64 {
        self.mag_per_layer.first().copied().unwrap_or(0.0)
    }
}

/// Accumulates batch measurements into an epoch record.
#[derive(Debug, Clone)]
pub struct EpochAccumulator {
    min_deriv: Vec<f64>,
    dead_sum: Vec<f64>,
    clamp_sum: Vec<f64>,
    batches: usize,
    mag_sum: Vec<f64>,
    mag_count: Vec<usize>,
    policy: DeadNeuronPolicy,
}

impl EpochAccumulator {
    pub fn new(activation_count: usize, clamp_count: usize, policy: DeadNeuronPolicy) -> Self {
        EpochAccumulator {
            min_deriv: vec![f64::INFINITY; activation_count],
            dead_sum: vec![0.0; activation_count],
            clamp_sum: vec![0.0; clamp_count],
            batches: 0,
            mag_sum: vec![0.0; activation_count],
            mag_count: vec![0; activation_count],
            policy,
        }
    }

    pub fn record_forward(&mut self, net: &Network, cache: &ForwardCache) {
        let derivs = cache.activation_derivatives();
        for (i, d) in derivs.iter().enumerate() {
            self.min_deriv[i] = self.min_deriv[i].min(min_abs_derivative_of(d));
            self.dead_sum[i] += dead_ratio_of(d, &self.policy);
        }
        for (i, s) in cache.clamp_saturation(net).iter().enumerate() {
            self.clamp_sum[i] += s;
        }
        self.batches += 1;
    }

    /// `signal` carries gradients of the batch-mean loss; scaling by the
    /// batch size converts to per-sample-loss gradients so that duplicated
    /// batches leave the MAG unchanged.
    pub fn record_signal(&mut self, signal: &SignalStats, batch_rows: usize) {
        for (i, (sum_abs, count)) in signal.per_activation.iter().enumerate() {
            self.mag_sum[i] += sum_abs * batch_rows as f64;
            self.mag_count[i] += count;
        }
    }

    pub fn batches(&self) -> usize {
        self.batches
    }

    pub fn finish(
        self,
        epoch: u32,
        train_loss: f64,
        val_metric: f64,
        learning_rate: f64,
        diagonal_bound_holds: bool,
    ) -> DiagnosticsRecord {
        let b = self.batches.max(1) as f64;
        DiagnosticsRecord {
            epoch,
            min_abs_derivative: self
                .min_deriv
                .into_iter()
                .map(|v| if v.is_finite() { v } else { 0.0 })
                .collect(),
            dead_ratio: self.dead_sum.into_iter().map(|v| v / b).collect(),
            clamp_saturation: self.clamp_sum.into_iter().map(|v| v / b).collect(),
            mag_per_layer: self
                .mag_sum
                .iter()
                .zip(&self.mag_count)
                .map(|(s, c)| if *c > 0 { s / *c as f64 } else { 0.0 })
                .collect(),
            train_loss,
            val_metric,
            learning_rate,
            diagonal_bound_holds,
        }
    }
}

/// AUC via the Mann-Whitney rank statistic with midranks for ties.
pub fn compute_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() || scores.is_empty() {
        return Err(Error::Shape("auc needs aligned, non-empty inputs".into()));
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Domain("auc needs both classes present".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores"));
    // midranks over tie groups
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = midrank;
        }
        i = j + 1;
    }
    let rank_sum_pos: f64 = ranks
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l == 1)
        .map(|(r, _)| r)
        .sum();
    let u = rank_sum_pos - pos as f64 * (pos as f64 + 1.0) / 2.0;
    Ok(u / (pos as f64 * neg as f64))
}

/// Fraction of rows whose argmax matches the label.
pub fn compute_accuracy(logits: &Matrix, labels: &[usize]) -> Result<f64> {
    if logits.rows() != labels.len() || labels.is_empty() {
        return Err(Error::Shape("accuracy needs aligned, non-empty inputs".into()));
    }
    let preds = logits.argmax_rows();
    let hits = preds.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / labels.len() as f64)
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    Ok(std::io::BufWriter::new(std::fs::File::create(path)?))
}

/// Heatmap export: one row per (epoch, activation layer). Values print at
/// full round-trip precision.
pub fn export_heatmap_csv(
    records: &[DiagnosticsRecord],
    fingerprint: &str,
    path: &Path,
) -> Result<()> {
    if records.is_empty() {
        return Err(Error::Config("no diagnostics records to export".into()));
    }
    let mut f = create(path)?;
    writeln!(f, "# config_fingerprint={fingerprint}")?;
    writeln!(f, "epoch,layer_index,dead_ratio,min_abs_derivative")?;
    for r in records {
        for (layer, (dead, min_d)) in
            r.dead_ratio.iter().zip(&r.min_abs_derivative).enumerate()
        {
            writeln!(f, "{},{},{},{}", r.epoch, layer, dead, min_d)?;
        }
    }
    Ok(())
}

/// Per-epoch scalar metrics.
pub fn export_metrics_csv(
    records: &[DiagnosticsRecord],
    fingerprint: &str,
    path: &Path,
) -> Result<()> {
    let mut f = create(path)?;
    writeln!(f, "# config_fingerprint={fingerprint}")?;
    writeln!(
        f,
        "epoch,train_loss,val_metric,learning_rate,first_layer_mag,diagonal_bound_holds"
    )?;
    for r in records {
        writeln!(
            f,
            "{},{},{},{},{},{}",
            r.epoch,
            r.train_loss,
            r.val_metric,
            r.learning_rate,
            r.first_layer_mag(),
            r.diagonal_bound_holds
        )?;
    }
    Ok(())
}

/// Final-epoch depth profile: min |sigma'| and dead ratio per layer with
/// the theoretical floor column (0 for non-Bernstein activations).
pub fn export_depth_profile_csv(
    record: &DiagnosticsRecord,
    net: &Network,
    fingerprint: &str,
    path: &Path,
) -> Result<()> {
    let mut f = create(path)?;
    writeln!(f, "# config_fingerprint={fingerprint}")?;
    writeln!(
        f,
        "layer_index,min_abs_derivative,dead_ratio,theoretical_floor"
    )?;
    let kinds = net.activation_kinds();
    for (i, ((min_d, dead), kind)) in record
        .min_abs_derivative
        .iter()
        .zip(&record.dead_ratio)
        .zip(&kinds)
        .enumerate()
    {
        let floor = kind
            .bernstein_spec()
            .map(|s| s.derivative_floor())
            .unwrap_or(0.0);
        writeln!(f, "{i},{min_d},{dead},{floor}")?;
    }
    Ok(())
}
