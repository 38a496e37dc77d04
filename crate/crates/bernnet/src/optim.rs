//! AdamW, learning-rate schedulers, and early stopping.

use crate::error::{Error, Result};
use crate::network::{Gradients, ParamKind, Parameters};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// First epoch (1-based) at which decoupled decay applies.
    pub decay_start_epoch: u32,
    /// Also decay BatchNorm gamma/beta.
    pub decay_batchnorm: bool,
    /// Also decay Bernstein c0/rho. Decaying rho biases steps toward
    /// ln2 + delta rather than zero, so this is opt-in.
    pub decay_bernstein: bool,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
            decay_start_epoch: 1,
            decay_batchnorm: false,
            decay_bernstein: false,
        }
    }
}

fn decay_eligible(kind: ParamKind, cfg: &AdamWConfig) -> bool {
    match kind {
        ParamKind::LinearWeight => true,
        ParamKind::LinearBias => false,
        ParamKind::BatchNormGamma | ParamKind::BatchNormBeta => cfg.decay_batchnorm,
        ParamKind::BernsteinC0 | ParamKind::BernsteinRho => cfg.decay_bernstein,
    }
}

/// Per-tensor moment accumulators, allocated lazily on the first step so
/// the state always mirrors the walker order.
#[derive(Debug, Clone)]
pub struct AdamWState {
    cfg: AdamWConfig,
    step: u64,
    moments: Vec<(Vec<f64>, Vec<f64>)>,
}

impl AdamWState {
    pub fn new(cfg: AdamWConfig) -> Self {
        AdamWState {
            cfg,
            step: 0,
            moments: Vec::new(),
        }
    }

    pub fn config(&self) -> &AdamWConfig {
        &self.cfg
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One AdamW update. `lr` is the current (scheduled) learning rate;
    /// `epoch` is 1-based and gates the decay start.
    pub fn step(
        &mut self,
        params: &mut Parameters,
        grads: &Gradients,
        lr: f64,
        epoch: u32,
    ) -> Result<()> {
        self.step += 1;
        let t = self.step as i32;
        let cfg = self.cfg;
        let bias1 = 1.0 - cfg.beta1.powi(t);
        let bias2 = 1.0 - cfg.beta2.powi(t);
        let decay_active = cfg.weight_decay > 0.0 && epoch >= cfg.decay_start_epoch;

        let moments = &mut self.moments;
        let mut tensor = 0usize;
        let mut shape_err = None;
        params.for_each_with_grads(grads, &mut |kind, vals, g| {
            if tensor == moments.len() {
                moments.push((vec![0.0; vals.len()], vec![0.0; vals.len()]));
            }
            let (m, v) = &mut moments[tensor];
            tensor += 1;
            if m.len() != vals.len() {
                shape_err = Some(format!(
                    "moment shape {} vs parameter shape {}",
                    m.len(),
                    vals.len()
                ));
                return;
            }
            for i in 0..vals.len() {
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                vals[i] -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
                if decay_active && decay_eligible(kind, &cfg) {
                    vals[i] -= lr * cfg.weight_decay * vals[i];
                }
            }
        })?;
        if let Some(msg) = shape_err {
            return Err(Error::Shape(msg));
        }
        Ok(())
    }
}

/// Metric direction for schedulers and early stopping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Maximize,
    Minimize,
}

impl Direction {
    fn improved(self, current: f64, best: f64, min_delta: f64) -> bool {
        match self {
            Direction::Maximize => current >= best + min_delta,
            Direction::Minimize => current <= best - min_delta,
        }
    }
}

#[derive(Debug, Clone)]
pub enum Scheduler {
    None,
    /// Multiply by gamma at the end of every epoch >= start_epoch.
    ExponentialDecay {
        gamma: f64,
        start_epoch: u32,
    },
    /// Multiply by `factor` once the monitored metric has gone
    /// `patience + 1` consecutive epochs without improving by min_delta.
    ReduceOnPlateau {
        factor: f64,
        patience: u32,
        min_delta: f64,
        direction: Direction,
        floor: f64,
        best: Option<f64>,
        bad_epochs: u32,
    },
}

impl Scheduler {
    pub fn exponential(gamma: f64, start_epoch: u32) -> Self {
        Scheduler::ExponentialDecay { gamma, start_epoch }
    }

    pub fn plateau(factor: f64, patience: u32, min_delta: f64, direction: Direction) -> Self {
        Scheduler::ReduceOnPlateau {
            factor,
            patience,
            min_delta,
            direction,
            floor: 1e-6,
            best: None,
            bad_epochs: 0,
        }
    }

    /// Advance one epoch (1-based, called at epoch end with that epoch's
    /// metric) and return the learning rate for the next epoch.
    pub fn step(&mut self, epoch: u32, metric: f64, lr: f64) -> Result<f64> {
        if !metric.is_finite() {
            return Err(Error::NonFinite(format!("scheduler metric at epoch {epoch}")));
        }
        match self {
            Scheduler::None => Ok(lr),
            Scheduler::ExponentialDecay { gamma, start_epoch } => {
                if epoch >= *start_epoch {
                    Ok(lr * *gamma)
                } else {
                    Ok(lr)
                }
            }
            Scheduler::ReduceOnPlateau {
                factor,
                patience,
                min_delta,
                direction,
                floor,
                best,
                bad_epochs,
            } => {
                match best {
                    None => {
                        *best = Some(metric);
                        *bad_epochs = 0;
                    }
                    Some(b) => {
                        if direction.improved(metric, *b, *min_delta) {
                            *best = Some(metric);
                            *bad_epochs = 0;
                        } else {
                            *bad_epochs += 1;
                        }
                    }
                }
                if *bad_epochs > *patience {
                    *bad_epochs = 0;
                    Ok((lr * *factor).max(*floor))
                } else {
                    Ok(lr)
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct EarlyStop {
    pub patience: u32,
    pub min_delta: f64,
    pub direction: Direction,
    best: Option<f64>,
    since_improvement: u32,
}

impl EarlyStop {
    pub fn new(patience: u32, min_delta: f64, direction: Direction) -> Self {
        EarlyStop {
            patience,
            min_delta,
            direction,
            best: None,
            since_improvement: 0,
        }
    }

    /// Record an epoch metric; true once `patience` consecutive
    /// non-improving epochs have passed.
    pub fn update(&mut self, metric: f64) -> Result<bool> {
        if !metric.is_finite() {
            return Err(Error::NonFinite("early-stop metric".into()));
        }
        match self.best {
            None => {
                self.best = Some(metric);
                self.since_improvement = 0;
            }
            Some(b) => {
                if self.direction.improved(metric, b, self.min_delta) {
                    self.best = Some(metric);
                    self.since_improvement = 0;
                } else {
                    self.since_improvement += 1;
                }
            }
        }
        Ok(self.since_improvement >= self.patience)
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bernstein::InitMode;
    use crate::network::{stacks, ActivationKind, Gradients, LayerSpec, Network, Parameters};
    use crate::numcore::{Matrix, Rng};

    fn scalar_setup() -> (Network, Parameters, Gradients) {
        let net = Network::new(
            1,
            vec![LayerSpec::Linear { inputs: 1, outputs: 1 }],
        )
        .unwrap();
        let mut params = Parameters::init(&net, &mut Rng::new(1), InitMode::UnitSpan).unwrap();
        params.for_each_param_mut(&mut |kind, vals| {
            if kind == ParamKind::LinearWeight {
                vals[0] = 1.0;
            }
        });
        let grads = Gradients::zeros_like(&params);
        (net, params, grads)
    }

    fn weight(params: &mut Parameters) -> f64 {
        let mut w = 0.0;
        params.for_each_param_mut(&mut |kind, vals| {
            if kind == ParamKind::LinearWeight {
                w = vals[0];
            }
        });
        w
    }

    fn set_weight_grad(params: &Parameters, g: f64) -> Gradients {
        let mut grads = Gradients::zeros_like(params);
        if let crate::network::LayerGrads::Linear { weights, .. } = &mut grads.layers[0] {
            *weights = Matrix::from_vec(1, 1, vec![g]).unwrap();
        }
        grads
    }

    #[test]
    fn zero_grad_zero_decay_leaves_params() {
        let (_, mut params, grads) = scalar_setup();
        let before = weight(&mut params);
        let mut state = AdamWState::new(AdamWConfig::default());
        state.step(&mut params, &grads, 0.1, 1).unwrap();
        assert_eq!(weight(&mut params), before);
    }

    #[test]
    fn first_step_moves_by_lr_sign() {
        // hand-computed AdamW first step: m_hat = g, v_hat = g^2, so the
        // move is -lr * g / (|g| + eps) = -lr * sign(g) * (1 - eps/(|g|+eps))
        let (_, mut params, _) = scalar_setup();
        let grads = set_weight_grad(&params, 0.5);
        let mut state = AdamWState::new(AdamWConfig::default());
        state.step(&mut params, &grads, 0.1, 1).unwrap();
        let expected = 1.0 - 0.1 * 0.5 / (0.5 + 1e-8);
        assert!((weight(&mut params) - expected).abs() < 1e-15);
    }

    #[test]
    fn decay_gated_by_start_epoch() {
        let cfg = AdamWConfig {
            weight_decay: 0.01,
            decay_start_epoch: 5,
            ..AdamWConfig::default()
        };
        let (_, mut params, zero_grads) = scalar_setup();
        let mut state = AdamWState::new(cfg);
        state.step(&mut params, &zero_grads, 0.1, 4).unwrap();
        assert_eq!(weight(&mut params), 1.0, "no decay before start epoch");
        state.step(&mut params, &zero_grads, 0.1, 5).unwrap();
        // shrinks by lr * wd * value
        assert!((weight(&mut params) - (1.0 - 0.1 * 0.01)).abs() < 1e-15);
    }

    #[test]
    fn bernstein_params_not_decayed_by_default() {
        let kind = ActivationKind::Bernstein {
            spec: crate::bernstein::BernsteinSpec::new(4, -3.0, 3.0, 0.01).unwrap(),
            sharing: crate::network::Sharing::PerNeuron,
        };
        let net = stacks::mlp(2, &[3], 1, &kind, true, false).unwrap();
        let mut params = Parameters::init(&net, &mut Rng::new(2), InitMode::UnitSpan).unwrap();
        let before = params.clone();
        let grads = Gradients::zeros_like(&params);
        let cfg = AdamWConfig {
            weight_decay: 0.1,
            ..AdamWConfig::default()
        };
        let mut state = AdamWState::new(cfg);
        state.step(&mut params, &grads, 0.5, 1).unwrap();
        // weights decayed, bernstein and bias untouched
        let mut diffs: Vec<(ParamKind, bool)> = Vec::new();
        let mut idx = 0;
        let mut before_flat: Vec<f64> = Vec::new();
        let mut before_c = before.clone();
        before_c.for_each_param_mut(&mut |_, vals| before_flat.extend_from_slice(vals));
        params.for_each_param_mut(&mut |kind, vals| {
            let changed = vals
                .iter()
                .zip(&before_flat[idx..idx + vals.len()])
                .any(|(a, b)| a != b);
            idx += vals.len();
            diffs.push((kind, changed));
        });
        for (kind, changed) in diffs {
            match kind {
                ParamKind::LinearWeight => assert!(changed, "weights should decay"),
                _ => assert!(!changed, "{kind:?} should not decay"),
            }
        }
    }

    /// Independent scalar Adam trace (no decay) to pin the update math.
    #[test]
    fn adamw_without_decay_matches_reference_adam() {
        let (_, mut params, _) = scalar_setup();
        let mut state = AdamWState::new(AdamWConfig::default());
        let gs = [0.5, -0.3, 0.8, 0.1, -0.9];
        let (b1, b2, eps, lr) = (0.9, 0.999, 1e-8, 0.05);
        let (mut m, mut v) = (0.0f64, 0.0f64);
        let mut reference = 1.0f64;
        for (t, &g) in gs.iter().enumerate() {
            let grads = set_weight_grad(&params, g);
            state.step(&mut params, &grads, lr, 1).unwrap();
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t as i32 + 1));
            let vh = v / (1.0 - b2.powi(t as i32 + 1));
            reference -= lr * mh / (vh.sqrt() + eps);
            assert!(
                (weight(&mut params) - reference).abs() < 1e-12,
                "step {t}: {} vs {reference}",
                weight(&mut params)
            );
        }
    }

    #[test]
    fn exponential_decay_from_start_epoch() {
        let mut s = Scheduler::exponential(0.95, 5);
        let mut lr = 2e-3;
        for epoch in 1..=6 {
            lr = s.step(epoch, 0.0, lr).unwrap();
        }
        // decays applied at end of epochs 5 and 6 -> lr for epoch 7
        assert!((lr - 2e-3 * 0.95 * 0.95).abs() < 1e-18);
    }

    #[test]
    fn plateau_unchanged_while_improving() {
        let mut s = Scheduler::plateau(0.5, 3, 1e-4, Direction::Maximize);
        let mut lr = 1e-3;
        for (epoch, metric) in [0.1, 0.2, 0.3, 0.4, 0.5].iter().enumerate() {
            lr = s.step(epoch as u32 + 1, *metric, lr).unwrap();
        }
        assert_eq!(lr, 1e-3);
    }

    #[test]
    fn plateau_reduces_at_fourth_flat_epoch() {
        // patience 3: first epoch sets the baseline, then flat epochs
        // 2, 3, 4 are tolerated and the 4th flat epoch (5th overall) cuts
        let mut s = Scheduler::plateau(0.5, 3, 1e-4, Direction::Maximize);
        let mut lr = 1.0;
        let mut cut_at = None;
        for epoch in 1..=6 {
            let new_lr = s.step(epoch, 0.7, lr).unwrap();
            if new_lr < lr && cut_at.is_none() {
                cut_at = Some(epoch);
            }
            lr = new_lr;
        }
        assert_eq!(cut_at, Some(5));
        assert_eq!(lr, 0.5, "counter resets after a cut, so only one cut by epoch 6");
    }

    #[test]
    fn plateau_respects_floor() {
        let mut s = Scheduler::plateau(0.5, 0, 1e-4, Direction::Minimize);
        let mut lr = 4e-6;
        for epoch in 1..=10 {
            lr = s.step(epoch, 1.0, lr).unwrap();
        }
        assert_eq!(lr, 1e-6);
    }

    #[test]
    fn early_stop_never_fires_while_improving() {
        let mut es = EarlyStop::new(3, 1e-4, Direction::Maximize);
        for i in 0..50 {
            assert!(!es.update(i as f64).unwrap());
        }
    }

    #[test]
    fn early_stop_fires_after_exact_patience() {
        let mut es = EarlyStop::new(20, 1e-4, Direction::Maximize);
        assert!(!es.update(0.5).unwrap()); // sets best
        for i in 1..20 {
            assert!(!es.update(0.5).unwrap(), "fired early at {i}");
        }
        assert!(es.update(0.5).unwrap(), "20th post-best epoch must fire");
    }

    #[test]
    fn improvement_of_exactly_min_delta_resets() {
        let mut es = EarlyStop::new(2, 1e-3, Direction::Maximize);
        es.update(0.5).unwrap();
        es.update(0.5).unwrap(); // 1 bad
        assert!(!es.update(0.5 + 1e-3).unwrap(), "exact min_delta improves");
        es.update(0.5 + 1e-3).unwrap(); // 1 bad
        assert!(es.update(0.5 + 1e-3).unwrap(), "2 bad after reset fires");
    }

    #[test]
    fn scheduler_trace_is_replayable() {
        let metrics = [0.1, 0.15, 0.15, 0.15, 0.15, 0.15, 0.2, 0.2, 0.2, 0.2];
        let run = |ms: &[f64]| -> Vec<f64> {
            let mut s = Scheduler::plateau(0.5, 2, 1e-4, Direction::Maximize);
            let mut lr = 1.0;
            ms.iter()
                .enumerate()
                .map(|(e, &m)| {
                    lr = s.step(e as u32 + 1, m, lr).unwrap();
                    lr
                })
                .collect()
        };
        assert_eq!(run(&metrics), run(&metrics));
    }
}
