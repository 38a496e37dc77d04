//! The `verify` subcommand: a fast invariant battery over every module.
//! Each check prints one line with the measured value and its tolerance;
//! any failure produces a property error (exit code 2).

use crate::bernstein::{
    activation_backward, basis_eval_all, check_diagonal_bound, derivative_bounds, init_rho,
    poly_derivative, poly_eval, reconstruct_coefficients, softplus, softplus_inverse,
    BernsteinSpec, ConstrainedCoefficients, InitMode,
};
use crate::diagnostics::compute_auc;
use crate::error::{Error, Result};
use crate::gradcheck::{gradient_check, GradCheckSettings};
use crate::network::{
    effective_degree_probe, stacks, ActivationKind, LayerSpec, LossTarget, Network, Parameters,
    Sharing,
};
use crate::numcore::Rng;

struct Report {
    failures: Vec<String>,
}

impl Report {
    fn new() -> Self {
        Report { failures: Vec::new() }
    }

    fn check(&mut self, name: &str, measured: f64, tol: f64, ok: bool) {
        if ok {
            println!("PASS {name}: measured={measured:.3e} tol={tol:.1e}");
        } else {
            println!("FAIL {name}: measured={measured:.3e} tol={tol:.1e}");
            self.failures.push(name.to_string());
        }
    }

    fn check_below(&mut self, name: &str, measured: f64, tol: f64) {
        self.check(name, measured, tol, measured <= tol);
    }
}

/// Run the battery. `inject_fault` perturbs one backward tensor as a
/// negative control; the run must then fail and name it.
pub fn cmd_verify(inject_fault: bool) -> Result<()> {
    let mut report = Report::new();
    let mut rng = Rng::new(20260810);

    // softplus round trip
    let mut worst: f64 = 0.0;
    for i in 0..=60 {
        let x = -30.0 + i as f64;
        worst = worst.max((softplus_inverse(softplus(x))? - x).abs());
    }
    report.check_below("softplus_round_trip", worst, 1e-12);

    // partition of unity / positivity over random specs
    let mut sum_resid: f64 = 0.0;
    let mut min_basis: f64 = 0.0;
    for _ in 0..200 {
        let n = 1 + rng.below(20);
        let l = rng.uniform_range(-5.0, 0.0);
        let u = l + rng.uniform_range(0.5, 8.0);
        let spec = BernsteinSpec::new(n, l, u, 0.4 / n as f64)?;
        for _ in 0..5 {
            let x = rng.uniform_range(l, u);
            let b = basis_eval_all(&spec, x)?;
            sum_resid = sum_resid.max((b.iter().sum::<f64>() - 1.0).abs());
            min_basis = min_basis.min(b.iter().fold(f64::INFINITY, |m, &v| m.min(v)));
        }
    }
    report.check_below("partition_of_unity", sum_resid, 1e-13);
    report.check("positivity", min_basis, -1e-15, min_basis >= -1e-15);

    // linear precision
    let spec = BernsteinSpec::new(9, -3.0, 3.0, 0.01)?;
    let lin: Vec<f64> = (0..=9).map(|k| -3.0 + k as f64 * 6.0 / 9.0).collect();
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let x = rng.uniform_range(-3.0, 3.0);
        worst = worst.max((poly_eval(&lin, &spec, x)? - x).abs());
    }
    report.check_below("linear_precision", worst, 1e-12);

    // polynomial derivative vs finite differences
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let c: Vec<f64> = (0..=9).map(|_| rng.uniform_range(-2.0, 2.0)).collect();
        let x = rng.uniform_range(-3.0 + 2.0 * h, 3.0 - 2.0 * h);
        let fd = (poly_eval(&c, &spec, x + h)? - poly_eval(&c, &spec, x - h)?) / (2.0 * h);
        worst = worst.max((fd - poly_derivative(&c, &spec, x)?).abs());
    }
    report.check_below("poly_derivative_fd", worst, 1e-7);

    // activation backward vs finite differences
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let cc = ConstrainedCoefficients {
            c0: rng.uniform_range(-1.0, 1.0),
            rho: (0..9).map(|_| rng.uniform_range(-2.0, 2.0)).collect(),
        };
        let x = rng.uniform_range(-3.0 + 2.0 * h, 3.0 - 2.0 * h);
        let g = activation_backward(&cc, &spec, x, 1.0)?;
        let eval = |cc: &ConstrainedCoefficients, x: f64| -> Result<f64> {
            poly_eval(&reconstruct_coefficients(cc, spec.delta), &spec, x)
        };
        let fd_x = (eval(&cc, x + h)? - eval(&cc, x - h)?) / (2.0 * h);
        worst = worst.max((fd_x - g.x).abs());
        for j in 0..9 {
            let mut cp = cc.clone();
            cp.rho[j] += h;
            let mut cm = cc.clone();
            cm.rho[j] -= h;
            let fd = (eval(&cp, x)? - eval(&cm, x)?) / (2.0 * h);
            worst = worst.max((fd - g.rho[j]).abs());
        }
    }
    report.check_below("activation_backward_fd", worst, 1e-7);

    // derivative floor of constrained coefficients
    let floor = spec.derivative_floor();
    let mut worst_margin = f64::INFINITY;
    for _ in 0..200 {
        let cc = ConstrainedCoefficients {
            c0: rng.uniform_range(-1.0, 1.0),
            rho: (0..9).map(|_| rng.uniform_range(-30.0, 5.0)).collect(),
        };
        let c = reconstruct_coefficients(&cc, spec.delta);
        let b = derivative_bounds(&c, &spec)?;
        worst_margin = worst_margin.min(b.m_lower - floor);
    }
    report.check(
        "derivative_floor_analytic",
        worst_margin,
        -1e-12,
        worst_margin >= -1e-12,
    );

    // diagonal bound over a constrained layer
    let coeffs: Vec<Vec<f64>> = (0..32)
        .map(|_| {
            let cc = ConstrainedCoefficients {
                c0: rng.uniform_range(-1.0, 1.0),
                rho: (0..9).map(|_| rng.uniform_range(-8.0, 3.0)).collect(),
            };
            reconstruct_coefficients(&cc, spec.delta)
        })
        .collect();
    let (holds, viol) = check_diagonal_bound(&coeffs, &spec)?;
    report.check("diagonal_bound", viol.len() as f64, 0.0, holds);

    // degree probe: two degree-2 layers compose to degree 4
    let probe_spec = BernsteinSpec::new(2, -3.0, 3.0, 0.01)?;
    let probe_net = Network::new_unstabilized(
        1,
        vec![
            LayerSpec::Linear { inputs: 1, outputs: 3 },
            LayerSpec::Activation {
                kind: ActivationKind::Bernstein { spec: probe_spec, sharing: Sharing::PerNeuron },
            },
            LayerSpec::Linear { inputs: 3, outputs: 3 },
            LayerSpec::Activation {
                kind: ActivationKind::Bernstein { spec: probe_spec, sharing: Sharing::PerNeuron },
            },
            LayerSpec::Linear { inputs: 3, outputs: 1 },
        ],
    )?;
    let mut probe_rng = Rng::new(1113);
    let mut probe_params = Parameters::init(&probe_net, &mut probe_rng, InitMode::UnitSpan)?;
    probe_params.for_each_param_mut(&mut |kind, vals| match kind {
        crate::network::ParamKind::LinearWeight => {
            for v in vals {
                *v = v.clamp(-0.8, 0.8);
            }
        }
        crate::network::ParamKind::BernsteinRho => {
            for v in vals.iter_mut() {
                *v = probe_rng.uniform_range(-1.5, 1.5);
            }
        }
        _ => {}
    });
    let at4 = effective_degree_probe(&probe_net, &probe_params, (-1.0, 1.0), 4, 64)?;
    let at3 = effective_degree_probe(&probe_net, &probe_params, (-1.0, 1.0), 3, 64)?;
    report.check_below("degree_probe_exact", at4, 1e-8);
    report.check("degree_probe_generic", at3, 1e-3, at3 > 1e-3);

    // full-network gradient check per activation kind
    let kinds: Vec<(&str, ActivationKind)> = vec![
        ("relu", ActivationKind::Relu),
        ("leaky_relu", ActivationKind::LeakyRelu { slope: 0.05 }),
        ("selu", ActivationKind::Selu),
        ("gelu", ActivationKind::Gelu),
        (
            "bernstein",
            ActivationKind::Bernstein {
                spec: BernsteinSpec::new(5, -3.0, 3.0, 0.01)?,
                sharing: Sharing::PerNeuron,
            },
        ),
    ];
    for (name, kind) in kinds {
        let net = stacks::mlp(3, &[4, 4], 2, &kind, true, false)?;
        let mut grng = Rng::new(777);
        let mut params = Parameters::init(&net, &mut grng, InitMode::UnitSpan)?;
        let batch = grng.uniform_matrix(6, 3, -1.0, 1.0);
        let target = LossTarget::Labels((0..6).map(|i| i % 2).collect());
        let fault = if inject_fault && name == "bernstein" { Some(0) } else { None };
        let rep = gradient_check(
            &net,
            &mut params,
            &batch,
            &target,
            GradCheckSettings::default(),
            fault,
        )?;
        let check_name = format!("gradient_check_{name}");
        if rep.passed() {
            report.check(&check_name, rep.max_abs_err, 1e-7, true);
        } else {
            println!(
                "FAIL {check_name}: {} (first offender: {})",
                rep.failures.len(),
                rep.failures[0]
            );
            report.failures.push(check_name);
        }
    }

    // AUC fixture
    let auc = compute_auc(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1])?;
    report.check("auc_fixture", auc, 0.75, (auc - 0.75).abs() < 1e-15);

    // loss trivials
    let (bce, _) = crate::network::loss_bce_logits(
        &crate::numcore::Matrix::zeros(2, 1),
        &crate::numcore::Matrix::from_vec(2, 1, vec![0.0, 1.0])?,
    )?;
    report.check(
        "bce_ln2",
        bce,
        std::f64::consts::LN_2,
        (bce - std::f64::consts::LN_2).abs() < 1e-15,
    );

    // unit-span init slope: constant 1/(u-l)
    let cc = init_rho(&spec, InitMode::UnitSpan)?;
    let c = reconstruct_coefficients(&cc, spec.delta);
    let mut worst: f64 = 0.0;
    for i in 0..50 {
        let x = -3.0 + 6.0 * (i as f64 + 0.5) / 50.0;
        worst = worst.max((poly_derivative(&c, &spec, x)? - 1.0 / 6.0).abs());
    }
    report.check_below("unit_span_constant_slope", worst, 1e-12);

    if report.failures.is_empty() {
        println!("verify: all checks passed");
        Ok(())
    } else {
        Err(Error::Property(format!(
            "{} checks failed: {}",
            report.failures.len(),
            report.failures.join(", ")
        )))
    }
}
