//! Central-finite-difference validation of the analytic gradients.
//!
//! Used by the `verify` subcommand and the test suites: every trainable
//! scalar and every input entry is perturbed by +/- h and the resulting
//! loss slope is compared against the backward pass.

use crate::error::Result;
use crate::network::{
    backward_input_grads, forward, loss_for_target, LossTarget, Mode, Network, Parameters,
    SignalStats,
};
use crate::numcore::Matrix;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckSettings {
    pub h: f64,
    pub tol_abs: f64,
    pub tol_rel: f64,
}

impl Default for GradCheckSettings {
    fn default() -> Self {
        GradCheckSettings {
            h: 1e-5,
            tol_abs: 1e-7,
            tol_rel: 1e-5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub scalars_checked: usize,
    pub max_abs_err: f64,
    pub failures: Vec<String>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

fn loss_of(
    net: &Network,
    params: &mut Parameters,
    batch: &Matrix,
    target: &LossTarget,
) -> Result<f64> {
    let (out, _) = forward(net, params, batch, Mode::Train)?;
    Ok(loss_for_target(&out, target)?.0)
}

fn perturb(params: &mut Parameters, flat: usize, delta: f64) {
    let mut idx = 0;
    params.for_each_param_mut(&mut |_, vals| {
        if flat >= idx && flat < idx + vals.len() {
            vals[flat - idx] += delta;
        }
        idx += vals.len();
    });
}

/// Human-readable label per trainable scalar, in walker order.
fn scalar_labels(params: &mut Parameters) -> Vec<String> {
    let mut labels = Vec::new();
    let mut tensor = 0usize;
    params.for_each_param_mut(&mut |kind, vals| {
        for i in 0..vals.len() {
            labels.push(format!("tensor {tensor} ({kind:?})[{i}]"));
        }
        tensor += 1;
    });
    labels
}

/// Compare analytic gradients against central finite differences for every
/// parameter and input entry. `fault_tensor` perturbs the analytic gradient
/// of one tensor before comparison (negative control for the verifier).
pub fn gradient_check(
    net: &Network,
    params: &mut Parameters,
    batch: &Matrix,
    target: &LossTarget,
    settings: GradCheckSettings,
    fault_tensor: Option<usize>,
) -> Result<GradCheckReport> {
    let (out, cache) = forward(net, params, batch, Mode::Train)?;
    let (_, loss_grad) = loss_for_target(&out, target)?;
    let mut signal = SignalStats::default();
    let (grads, input_grad) =
        backward_input_grads(net, params, &cache, &loss_grad, &mut signal)?;

    // flatten analytic parameter grads in walker order
    let mut analytic = Vec::new();
    {
        let mut tensor = 0usize;
        params.for_each_with_grads(&grads, &mut |_, _, g| {
            let faulted = fault_tensor == Some(tensor);
            for &v in g {
                analytic.push(if faulted { v * 1.01 + 1e-3 } else { v });
            }
            tensor += 1;
        })?;
    }
    let labels = scalar_labels(params);
    debug_assert_eq!(labels.len(), analytic.len());

    let mut failures = Vec::new();
    let mut max_abs_err: f64 = 0.0;
    let mut check = |label: &str, a: f64, fd: f64| {
        let err = (a - fd).abs();
        max_abs_err = max_abs_err.max(err);
        let tol = settings.tol_abs.max(settings.tol_rel * a.abs().max(fd.abs()));
        if err > tol {
            failures.push(format!("{label}: analytic {a} vs fd {fd} (err {err:.3e})"));
        }
    };

    for (i, (&a, label)) in analytic.iter().zip(&labels).enumerate() {
        perturb(params, i, settings.h);
        let lp = loss_of(net, params, batch, target)?;
        perturb(params, i, -2.0 * settings.h);
        let lm = loss_of(net, params, batch, target)?;
        perturb(params, i, settings.h);
        let fd = (lp - lm) / (2.0 * settings.h);
        check(label, a, fd);
    }

    // input gradients
    let mut x = batch.clone();
    for r in 0..x.rows() {
        for c in 0..x.cols() {
            let orig = x.get(r, c);
            x.set(r, c, orig + settings.h);
            let lp = loss_of(net, params, &x, target)?;
            x.set(r, c, orig - settings.h);
            let lm = loss_of(net, params, &x, target)?;
            x.set(r, c, orig);
            let fd = (lp - lm) / (2.0 * settings.h);
            check(&format!("input[{r},{c}]"), input_grad.get(r, c), fd);
        }
    }

    Ok(GradCheckReport {
        scalars_checked: analytic.len() + batch.data().len(),
        max_abs_err,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bernstein::{BernsteinSpec, InitMode};
    use crate::network::{stacks, ActivationKind, Sharing};
    use crate::numcore::Rng;

    fn check_kind(kind: ActivationKind, seed: u64) {
        let net = stacks::mlp(3, &[4, 4], 2, &kind, true, false).unwrap();
        let mut rng = Rng::new(seed);
        let mut params = Parameters::init(&net, &mut rng, InitMode::UnitSpan).unwrap();
        let batch = rng.uniform_matrix(8, 3, -1.0, 1.0);
        let target = LossTarget::Labels((0..8).map(|i| i % 2).collect());
        let report = gradient_check(
            &net,
            &mut params,
            &batch,
            &target,
            GradCheckSettings::default(),
            None,
        )
        .unwrap();
        assert!(
            report.passed(),
            "{kind:?}: {} failures, first: {}",
            report.failures.len(),
            report.failures.first().cloned().unwrap_or_default()
        );
    }

    #[test]
    fn gradients_match_fd_relu() {
        check_kind(ActivationKind::Relu, 100);
    }

    #[test]
    fn gradients_match_fd_bernstein_per_neuron() {
        check_kind(
            ActivationKind::Bernstein {
                spec: BernsteinSpec::new(6, -3.0, 3.0, 0.01).unwrap(),
                sharing: Sharing::PerNeuron,
            },
            101,
        );
    }

    #[test]
    fn gradients_match_fd_bernstein_shared() {
        check_kind(
            ActivationKind::Bernstein {
                spec: BernsteinSpec::new(5, -3.0, 3.0, 0.02).unwrap(),
                sharing: Sharing::PerLayer,
            },
            102,
        );
    }

    #[test]
    fn gradients_match_fd_selu_gelu_leaky() {
        check_kind(ActivationKind::Selu, 103);
        check_kind(ActivationKind::Gelu, 104);
        check_kind(ActivationKind::LeakyRelu { slope: 0.05 }, 105);
    }

    #[test]
    fn gradients_match_fd_residual_mse() {
        let net = stacks::mlp(4, &[4, 4], 1, &ActivationKind::Relu, true, true).unwrap();
        let mut rng = Rng::new(200);
        let mut params = Parameters::init(&net, &mut rng, InitMode::UnitSpan).unwrap();
        let batch = rng.uniform_matrix(6, 4, -1.0, 1.0);
        let target = LossTarget::Reals(rng.uniform_matrix(6, 1, -1.0, 1.0));
        let report = gradient_check(
            &net,
            &mut params,
            &batch,
            &target,
            GradCheckSettings::default(),
            None,
        )
        .unwrap();
        assert!(report.passed(), "{:?}", report.failures.first());
    }

    #[test]
    fn injected_fault_is_caught() {
        let net = stacks::mlp(3, &[4], 2, &ActivationKind::Relu, true, false).unwrap();
        let mut rng = Rng::new(300);
        let mut params = Parameters::init(&net, &mut rng, InitMode::UnitSpan).unwrap();
        let batch = rng.uniform_matrix(4, 3, -1.0, 1.0);
        let target = LossTarget::Labels(vec![0, 1, 0, 1]);
        let report = gradient_check(
            &net,
            &mut params,
            &batch,
            &target,
            GradCheckSettings::default(),
            Some(0),
        )
        .unwrap();
        assert!(!report.passed());
        assert!(report.failures[0].contains("tensor 0"));
    }
}
