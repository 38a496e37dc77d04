//! The training loop: data preparation, epoch iteration, optimizer and
//! scheduler stepping, early stopping, diagnostics capture, and run-dir
//! output (metrics CSVs + checkpoints).

use crate::bernstein::check_diagonal_bound;
use crate::config::{data_root, DatasetConfig, ResolvedConfig, ValMetric};
use crate::data::{
    load_higgs_csv, load_mnist, split, synth_regression, BatchIterator, Dataset, Normalizer,
};
use crate::diagnostics::{
    compute_accuracy, compute_auc, export_depth_profile_csv, export_heatmap_csv,
    export_metrics_csv, DeadNeuronPolicy, DiagnosticsRecord, EpochAccumulator,
};
use crate::error::{Error, Result};
use crate::network::{
    backward_with_signal, forward, loss_for_target, save_checkpoint, stacks, LayerSpec,
    LossTarget, Mode, Network, Parameters, SignalStats,
};
use crate::numcore::{Matrix, Rng};
use crate::optim::{AdamWState, Direction, EarlyStop};
use std::path::{Path, PathBuf};

pub struct PreparedData {
    pub train: Dataset,
    pub valid: Dataset,
    pub output_width: usize,
}

fn find_idx_file(root: &Path, base: &str) -> Result<PathBuf> {
    let plain = root.join(base);
    if plain.exists() {
        return Ok(plain);
    }
    let gz = root.join(format!("{base}.gz"));
    if gz.exists() {
        return Ok(gz);
    }
    Err(Error::Config(format!(
        "dataset file {base}[.gz] not found under {}",
        root.display()
    )))
}

fn mnist_root(explicit: &Option<PathBuf>) -> PathBuf {
    if let Some(r) = explicit {
        return r.clone();
    }
    if let Some(r) = data_root() {
        return r.join("mnist");
    }
    PathBuf::from("data/mnist")
}

pub fn prepare_data(cfg: &ResolvedConfig) -> Result<PreparedData> {
    match &cfg.dataset {
        DatasetConfig::Mnist { root, subset_rows } => {
            let root = mnist_root(root);
            let train = load_mnist(
                &find_idx_file(&root, "train-images-idx3-ubyte")?,
                &find_idx_file(&root, "train-labels-idx1-ubyte")?,
            )?;
            let valid = load_mnist(
                &find_idx_file(&root, "t10k-images-idx3-ubyte")?,
                &find_idx_file(&root, "t10k-labels-idx1-ubyte")?,
            )?;
            let train = match subset_rows {
                Some(n) => train.head(*n),
                None => train,
            };
            // per-pixel z-score with a variance floor for blank borders
            let norm = Normalizer::fit(&train.features, 1e-8);
            let train = Dataset {
                features: norm.apply(&train.features)?,
                ..train
            };
            let valid = Dataset {
                features: norm.apply(&valid.features)?,
                ..valid
            };
            Ok(PreparedData { train, valid, output_width: 10 })
        }
        DatasetConfig::HiggsCsv { path, max_rows, val_fraction } => {
            let path = match data_root() {
                Some(root) if path.is_relative() && !path.exists() => root.join(path),
                _ => path.clone(),
            };
            let raw = load_higgs_csv(&path, *max_rows)?;
            let (train, valid) = split(&raw, 1.0 - val_fraction, cfg.seed)?;
            let norm = Normalizer::fit(&train.features, 1e-8);
            let train = Dataset {
                features: norm.apply(&train.features)?,
                ..train
            };
            let valid = Dataset {
                features: norm.apply(&valid.features)?,
                ..valid
            };
            Ok(PreparedData { train, valid, output_width: 1 })
        }
        DatasetConfig::Synthetic { target, val_fraction } => {
            let all = synth_regression(target, cfg.seed)?;
            let output_width = target.function.outputs();
            let (train, valid) = split(&all, 1.0 - val_fraction, cfg.seed)?;
            Ok(PreparedData { train, valid, output_width })
        }
    }
}

pub fn build_network(cfg: &ResolvedConfig, input_width: usize, output_width: usize) -> Result<Network> {
    let (kind, _) = cfg.activation.to_kind()?;
    stacks::mlp(
        input_width,
        &cfg.hidden,
        output_width,
        &kind,
        cfg.batch_norm,
        cfg.residual,
    )
}

fn eval_metric(
    net: &Network,
    params: &mut Parameters,
    data: &Dataset,
    metric: ValMetric,
) -> Result<f64> {
    let (out, _) = forward(net, params, &data.features, Mode::Eval)?;
    match (metric, &data.targets) {
        (ValMetric::Accuracy, LossTarget::Labels(labels)) => compute_accuracy(&out, labels),
        (ValMetric::Auc, LossTarget::Binary(t)) => {
            let scores: Vec<f64> = (0..out.rows()).map(|r| out.get(r, 0)).collect();
            let labels: Vec<u8> = (0..t.rows()).map(|r| t.get(r, 0) as u8).collect();
            compute_auc(&scores, &labels)
        }
        (ValMetric::Mse, _) => Ok(loss_for_target(&out, &data.targets)?.0),
        _ => Err(Error::Config("metric does not fit target kind".into())),
    }
}

/// Everything a finished run exposes to callers (experiments, tests).
pub struct TrainOutcome {
    pub records: Vec<DiagnosticsRecord>,
    pub best_train_loss: f64,
    pub best_val_metric: f64,
    pub final_train_loss: f64,
    pub epochs_run: u32,
    pub stopped_early: bool,
    pub net: Network,
    pub params: Parameters,
    pub fingerprint: String,
}

fn better(metric: ValMetric, candidate: f64, best: f64) -> bool {
    match metric.direction() {
        Direction::Maximize => candidate > best,
        Direction::Minimize => candidate < best,
    }
}

/// Run the full training loop without touching the filesystem.
pub fn train_in_memory(cfg: &ResolvedConfig) -> Result<TrainOutcome> {
    let data = prepare_data(cfg)?;
    data.train.validate()?;
    data.valid.validate()?;
    if data.valid.is_empty() {
        return Err(Error::Config("validation split is empty".into()));
    }
    let input_width = data.train.features.cols();
    let net = build_network(cfg, input_width, data.output_width)?;
    let (_, init_mode) = cfg.activation.to_kind()?;
    let mut rng = Rng::new(cfg.seed).derive(0x0A);
    let mut params = Parameters::init(&net, &mut rng, init_mode)?;
    let mut best_params = params.clone();

    let mut adamw = AdamWState::new(cfg.optimizer);
    let mut lr = cfg.optimizer.learning_rate;
    let mut scheduler = cfg.scheduler.build(cfg.val_metric.direction());
    let mut early = cfg
        .early_stop
        .map(|e| EarlyStop::new(e.patience, e.min_delta, cfg.val_metric.direction()));

    let policy = DeadNeuronPolicy::default();
    let activation_count = net.activation_count();
    let clamp_count = net
        .layers()
        .iter()
        .filter(|l| matches!(l, LayerSpec::Clamp { .. }))
        .count();

    let mut records: Vec<DiagnosticsRecord> = Vec::new();
    let mut best_train_loss = f64::INFINITY;
    let mut best_val = match cfg.val_metric.direction() {
        Direction::Maximize => f64::NEG_INFINITY,
        Direction::Minimize => f64::INFINITY,
    };
    let mut final_train_loss = f64::NAN;
    let mut epochs_run = 0;
    let mut stopped_early = false;

    if cfg.epochs == 0 {
        // initialization-state diagnostics only
        let mut acc = EpochAccumulator::new(activation_count, clamp_count, policy);
        let (out, cache) = forward(&net, &mut params, &data.train.features, Mode::Train)?;
        let (loss, _) = loss_for_target(&out, &data.train.targets)?;
        acc.record_forward(&net, &cache);
        let val = eval_metric(&net, &mut params, &data.valid, cfg.val_metric)?;
        let holds = diagonal_bound_holds(&net, &params)?;
        records.push(acc.finish(0, loss, val, lr, holds));
        final_train_loss = loss;
        best_train_loss = loss;
        best_val = val;
    }

    for epoch in 1..=cfg.epochs {
        let mut acc = EpochAccumulator::new(activation_count, clamp_count, policy);
        let mut loss_sum = 0.0;
        let mut loss_rows = 0usize;
        for (batch_idx, batch) in
            BatchIterator::new(data.train.len(), cfg.batch_size, cfg.seed, epoch).enumerate()
        {
            let features = select_rows(&data.train.features, &batch);
            let targets = data.train.targets.select(&batch);
            let (out, cache) = forward(&net, &mut params, &features, Mode::Train)?;
            let (loss, loss_grad) = loss_for_target(&out, &targets)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "loss at epoch {epoch}, batch {batch_idx}"
                )));
            }
            loss_sum += loss * batch.len() as f64;
            loss_rows += batch.len();
            let mut signal = SignalStats::default();
            let grads = backward_with_signal(&net, &params, &cache, &loss_grad, &mut signal)?;
            if batch_idx % cfg.diagnostics_stride == 0 {
                acc.record_forward(&net, &cache);
                acc.record_signal(&signal, batch.len());
            }
            adamw.step(&mut params, &grads, lr, epoch)?;
        }
        let train_loss = loss_sum / loss_rows.max(1) as f64;
        let val = eval_metric(&net, &mut params, &data.valid, cfg.val_metric)?;
        let holds = diagonal_bound_holds(&net, &params)?;
        records.push(acc.finish(epoch, train_loss, val, lr, holds));

        final_train_loss = train_loss;
        best_train_loss = best_train_loss.min(train_loss);
        if better(cfg.val_metric, val, best_val) {
            best_val = val;
            best_params = params.clone();
        }
        epochs_run = epoch;

        lr = scheduler.step(epoch, val, lr)?;
        if let Some(es) = early.as_mut() {
            if es.update(val)? {
                stopped_early = true;
                break;
            }
        }
    }
    if cfg.epochs > 0 && best_val.is_infinite() {
        return Err(Error::NonFinite("no finite validation metric".into()));
    }
    // params from the best validation epoch back the best checkpoint
    let outcome = TrainOutcome {
        records,
        best_train_loss,
        best_val_metric: best_val,
        final_train_loss,
        epochs_run,
        stopped_early,
        net,
        params: if cfg.epochs > 0 { best_params } else { params },
        fingerprint: cfg.fingerprint(),
    };
    Ok(outcome)
}

/// Check every Bernstein layer's per-neuron diagonal bound.
pub fn diagonal_bound_holds(net: &Network, params: &Parameters) -> Result<bool> {
    for (spec, coeffs) in params.bernstein_layers(net) {
        let recon: Vec<Vec<f64>> = coeffs
            .iter()
            .map(|cc| crate::bernstein::reconstruct_coefficients(cc, spec.delta))
            .collect();
        let (holds, _) = check_diagonal_bound(&recon, spec)?;
        if !holds {
            return Ok(false);
        }
    }
    Ok(true)
}

pub fn select_rows(m: &Matrix, indices: &[usize]) -> Matrix {
    let mut out = Matrix::zeros(indices.len(), m.cols());
    for (r, &i) in indices.iter().enumerate() {
        out.row_mut(r).copy_from_slice(m.row(i));
    }
    out
}

/// Train and write the run directory: metrics.csv, heatmap.csv,
/// depth_profile.csv, config.json, and final/best checkpoints.
pub fn cmd_train(cfg: &ResolvedConfig) -> Result<(TrainOutcome, PathBuf)> {
    let outcome = train_in_memory(cfg)?;
    let run_dir = cfg.output_dir.join(&cfg.name);
    std::fs::create_dir_all(&run_dir)?;
    write_run_outputs(cfg, &outcome, &run_dir)?;
    println!(
        "run {}: best train loss {:.6e}, best val metric {:.6}, {} epochs{}",
        cfg.name,
        outcome.best_train_loss,
        outcome.best_val_metric,
        outcome.epochs_run,
        if outcome.stopped_early { " (early stop)" } else { "" }
    );
    Ok((outcome, run_dir))
}

pub fn write_run_outputs(
    cfg: &ResolvedConfig,
    outcome: &TrainOutcome,
    run_dir: &Path,
) -> Result<()> {
    let fp = &outcome.fingerprint;
    export_metrics_csv(&outcome.records, fp, &run_dir.join("metrics.csv"))?;
    export_heatmap_csv(&outcome.records, fp, &run_dir.join("heatmap.csv"))?;
    if let Some(last) = outcome.records.last() {
        export_depth_profile_csv(last, &outcome.net, fp, &run_dir.join("depth_profile.csv"))?;
    }
    let cfg_json =
        serde_json::to_string_pretty(cfg).map_err(|e| Error::Config(e.to_string()))?;
    std::fs::write(run_dir.join("config.json"), cfg_json)?;
    save_checkpoint(&outcome.net, &outcome.params, &run_dir.join("checkpoint_best.bnck"))?;
    Ok(())
}
