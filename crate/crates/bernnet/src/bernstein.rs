//! Bernstein-basis activations: basis evaluation, polynomial value and
//! derivative, the monotone coefficient re-parameterization, and the
//! derivative bounds that make deep stacks trainable without residuals.
//!
//! A degree-n activation on [l, u] is `sigma(x) = sum_k c_k b_{n,k}(x)`.
//! Coefficients are never learned directly: they are reconstructed from a
//! base value `c0` and latent steps `rho` as cumulative sums of
//! `softplus(rho_j) + delta`, which forces `c_{k+1} - c_k >= delta` and
//! hence `|sigma'(x)| >= n*delta/(u-l)` everywhere on the interval.
//!
//! Basis rows are evaluated with the de Casteljau-style triangular
//! recurrence on the normalized variable, not with binomial coefficients,
//! which would overflow and lose precision at high degree.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Comparison slack for bound checks; floating-point reconstruction of the
/// coefficient differences can land an ulp below the algebraic floor.
pub const BOUND_SLACK: f64 = 1e-12;

/// Static contract of one Bernstein activation: degree, interval, margin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BernsteinSpec {
    pub degree: usize,
    pub lower: f64,
    pub upper: f64,
    pub delta: f64,
}

impl BernsteinSpec {
    pub fn new(degree: usize, lower: f64, upper: f64, delta: f64) -> Result<Self> {
        let spec = BernsteinSpec {
            degree,
            lower,
            upper,
            delta,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.degree < 1 {
            return Err(Error::Domain("degree must be >= 1".into()));
        }
        if !(self.upper > self.lower) {
            return Err(Error::Domain(format!(
                "interval [{}, {}] is empty",
                self.lower, self.upper
            )));
        }
        if !(self.delta > 0.0) {
            return Err(Error::Domain("delta must be positive".into()));
        }
        // unit-span initialization needs softplus_inverse(1/n - delta) > 0
        if self.delta >= 1.0 / self.degree as f64 {
            return Err(Error::Domain(format!(
                "delta {} must be below 1/n = {}",
                self.delta,
                1.0 / self.degree as f64
            )));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    fn check_in_interval(&self, x: f64) -> Result<()> {
        if x < self.lower || x > self.upper || x.is_nan() {
            return Err(Error::Domain(format!(
                "x = {x} outside [{}, {}]",
                self.lower, self.upper
            )));
        }
        Ok(())
    }

    /// The provable derivative floor n*delta/(u-l): no derivative of a
    /// constrained activation on this spec can fall below it.
    pub fn derivative_floor(&self) -> f64 {
        self.degree as f64 * self.delta / self.width()
    }
}

/// Learnable state of one activation: base coefficient plus latent steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstrainedCoefficients {
    pub c0: f64,
    pub rho: Vec<f64>,
}

/// Scaled min/max coefficient differences; these sandwich the derivative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivativeBounds {
    pub m_lower: f64,
    pub m_upper: f64,
}

/// How to seed the latent steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    /// Every step is exactly 1/n, c0 = 0: the activation spans [0, 1] with
    /// constant slope 1/(u-l). Default.
    UnitSpan,
    /// Steps are (u-l)/n, c0 = l: sigma(x) = x exactly at initialization.
    Identity,
}

/// ln(1 + e^x) in the overflow-safe form max(x,0) + ln(1 + e^-|x|).
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Inverse of softplus: ln(e^y - 1), defined for y > 0. Computed as
/// y + ln(1 - e^-y) for large y and ln(expm1(y)) for small y, where the
/// subtraction in the first form would cancel.
pub fn softplus_inverse(y: f64) -> Result<f64> {
    if !(y > 0.0) {
        return Err(Error::Domain(format!("softplus_inverse needs y > 0, got {y}")));
    }
    if y > std::f64::consts::LN_2 {
        Ok(y + (-(-y).exp()).ln_1p())
    } else {
        Ok(y.exp_m1().ln())
    }
}

/// Logistic function, the derivative of softplus.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Fill `out` with the degree-n basis row b_{n,0}(t) .. b_{n,n}(t) on the
/// unit interval via the triangular recurrence.
fn basis_row_unit(degree: usize, t: f64, out: &mut [f64]) {
    debug_assert_eq!(out.len(), degree + 1);
    let s = 1.0 - t;
    out[0] = 1.0;
    for j in 1..=degree {
        out[j] = t * out[j - 1];
        for k in (1..j).rev() {
            out[k] = t * out[k - 1] + s * out[k];
        }
        out[0] *= s;
    }
}

/// All n+1 basis values at `x` in [l, u].
pub fn basis_eval_all(spec: &BernsteinSpec, x: f64) -> Result<Vec<f64>> {
    spec.check_in_interval(x)?;
    let t = (x - spec.lower) / spec.width();
    let mut out = vec![0.0; spec.degree + 1];
    basis_row_unit(spec.degree, t, &mut out);
    Ok(out)
}

fn check_coeff_len(c: &[f64], spec: &BernsteinSpec) -> Result<()> {
    if c.len() != spec.degree + 1 {
        return Err(Error::Shape(format!(
            "need {} coefficients for degree {}, got {}",
            spec.degree + 1,
            spec.degree,
            c.len()
        )));
    }
    Ok(())
}

/// sigma(x) = sum_k c_k b_{n,k}(x).
pub fn poly_eval(c: &[f64], spec: &BernsteinSpec, x: f64) -> Result<f64> {
    check_coeff_len(c, spec)?;
    spec.check_in_interval(x)?;
    let t = (x - spec.lower) / spec.width();
    let mut row = vec![0.0; spec.degree + 1];
    basis_row_unit(spec.degree, t, &mut row);
    Ok(dot(c, &row))
}

/// sigma'(x) = n/(u-l) * sum_{k<n} (c_{k+1} - c_k) b_{k,n-1}(t).
pub fn poly_derivative(c: &[f64], spec: &BernsteinSpec, x: f64) -> Result<f64> {
    check_coeff_len(c, spec)?;
    spec.check_in_interval(x)?;
    let t = (x - spec.lower) / spec.width();
    let mut row = vec![0.0; spec.degree];
    basis_row_unit(spec.degree - 1, t, &mut row);
    let mut acc = 0.0;
    for k in 0..spec.degree {
        acc += (c[k + 1] - c[k]) * row[k];
    }
    Ok(acc * spec.degree as f64 / spec.width())
}

/// Value and derivative in one basis sweep; `scratch` must hold n+1 slots.
/// The degree-(n-1) row appears mid-recurrence, so the derivative costs one
/// extra dot product rather than a second sweep.
pub(crate) fn eval_value_and_derivative(
    c: &[f64],
    spec: &BernsteinSpec,
    x: f64,
    scratch: &mut [f64],
) -> (f64, f64) {
    let n = spec.degree;
    debug_assert_eq!(c.len(), n + 1);
    debug_assert_eq!(scratch.len(), n + 1);
    let t = (x - spec.lower) / spec.width();
    let s = 1.0 - t;
    basis_row_unit(n - 1, t, &mut scratch[..n]);
    let mut deriv = 0.0;
    for k in 0..n {
        deriv += (c[k + 1] - c[k]) * scratch[k];
    }
    deriv = deriv * n as f64 / spec.width();
    // one more recurrence step lifts the row to degree n
    scratch[n] = t * scratch[n - 1];
    for k in (1..n).rev() {
        scratch[k] = t * scratch[k - 1] + s * scratch[k];
    }
    scratch[0] *= s;
    (dot(c, scratch), deriv)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Rebuild the full coefficient vector from (c0, rho): each step is
/// softplus(rho_j) + delta, so the sequence is strictly increasing with
/// gaps of at least delta.
pub fn reconstruct_coefficients(cc: &ConstrainedCoefficients, delta: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(cc.rho.len() + 1);
    let mut c = cc.c0;
    out.push(c);
    for &r in &cc.rho {
        c += softplus(r) + delta;
        out.push(c);
    }
    out
}

/// Seed latent steps per the chosen mode.
pub fn init_rho(spec: &BernsteinSpec, mode: InitMode) -> Result<ConstrainedCoefficients> {
    let n = spec.degree as f64;
    let (step, c0) = match mode {
        InitMode::UnitSpan => (1.0 / n, 0.0),
        InitMode::Identity => (spec.width() / n, spec.lower),
    };
    let raw = step - spec.delta;
    if raw <= 0.0 {
        return Err(Error::Domain(format!(
            "delta {} too large for init step {step}",
            spec.delta
        )));
    }
    let rho = softplus_inverse(raw)?;
    Ok(ConstrainedCoefficients {
        c0,
        rho: vec![rho; spec.degree],
    })
}

/// Scaled min/max coefficient differences m_lower, m_upper.
pub fn derivative_bounds(c: &[f64], spec: &BernsteinSpec) -> Result<DerivativeBounds> {
    check_coeff_len(c, spec)?;
    let scale = spec.degree as f64 / spec.width();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for k in 0..spec.degree {
        let d = c[k + 1] - c[k];
        lo = lo.min(d);
        hi = hi.max(d);
    }
    Ok(DerivativeBounds {
        m_lower: scale * lo,
        m_upper: scale * hi,
    })
}

/// Sample |sigma'| at `samples` uniform points and test it against the
/// structural ceiling 2n * max|c_k|.
pub fn upper_bound_check(c: &[f64], spec: &BernsteinSpec, samples: usize) -> Result<bool> {
    check_coeff_len(c, spec)?;
    if samples < 1 {
        return Err(Error::Domain("samples must be >= 1".into()));
    }
    let ceiling = 2.0 * spec.degree as f64 * c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for i in 0..samples {
        let x = if samples == 1 {
            0.5 * (spec.lower + spec.upper)
        } else {
            spec.lower + spec.width() * i as f64 / (samples - 1) as f64
        };
        if poly_derivative(c, spec, x)?.abs() > ceiling + BOUND_SLACK {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Gradients of `upstream * sigma(x)` with respect to the scalar input, the
/// base coefficient, and every latent step.
#[derive(Debug, Clone)]
pub struct ActivationGrads {
    pub x: f64,
    pub c0: f64,
    pub rho: Vec<f64>,
}

/// Backward pass through one activation evaluation.
///
/// d sigma / d c0 = 1 (partition of unity); d sigma / d rho_j =
/// sigmoid(rho_j) * sum_{k>j} b_{n,k}(x) because rho_j moves every
/// coefficient above index j by the same amount.
pub fn activation_backward(
    cc: &ConstrainedCoefficients,
    spec: &BernsteinSpec,
    x: f64,
    upstream: f64,
) -> Result<ActivationGrads> {
    let c = reconstruct_coefficients(cc, spec.delta);
    let grad_x = upstream * poly_derivative(&c, spec, x)?;
    let row = basis_eval_all(spec, x)?;
    let n = spec.degree;
    // suffix[j] = sum_{k > j} b_{n,k}
    let mut rho_grads = vec![0.0; n];
    let mut suffix = 0.0;
    for j in (0..n).rev() {
        suffix += row[j + 1];
        rho_grads[j] = upstream * sigmoid(cc.rho[j]) * suffix;
    }
    Ok(ActivationGrads {
        x: grad_x,
        c0: upstream,
        rho: rho_grads,
    })
}

/// Per-neuron verdict of the sign-robust diagonal bound: every neuron must
/// satisfy m_lower >= n*delta/(u-l) (increasing) or
/// m_upper <= -n*delta/(u-l) (decreasing).
pub fn check_diagonal_bound(
    layer_coeffs: &[Vec<f64>],
    spec: &BernsteinSpec,
) -> Result<(bool, Vec<usize>)> {
    let floor = spec.derivative_floor();
    let mut violations = Vec::new();
    for (i, c) in layer_coeffs.iter().enumerate() {
        let b = derivative_bounds(c, spec)?;
        let increasing_ok = b.m_lower >= floor - BOUND_SLACK;
        let decreasing_ok = b.m_upper <= -floor + BOUND_SLACK;
        if !(increasing_ok || decreasing_ok) {
            violations.push(i);
        }
    }
    Ok((violations.is_empty(), violations))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Rng;

    const LN2: f64 = std::f64::consts::LN_2;

    fn spec(n: usize, l: f64, u: f64, delta: f64) -> BernsteinSpec {
        BernsteinSpec::new(n, l, u, delta).unwrap()
    }

    #[test]
    fn softplus_at_zero_is_ln2() {
        assert_eq!(softplus(0.0), LN2);
    }

    #[test]
    fn softplus_round_trip() {
        for i in 0..=60 {
            let x = -30.0 + i as f64;
            let y = softplus(x);
            let back = softplus_inverse(y).unwrap();
            assert!((back - x).abs() < 1e-12, "x={x} back={back}");
        }
    }

    #[test]
    fn softplus_large_argument_saturates() {
        assert_eq!(softplus(100.0), 100.0);
        assert!(softplus(-800.0) == 0.0);
    }

    #[test]
    fn softplus_inverse_rejects_nonpositive() {
        assert!(softplus_inverse(0.0).is_err());
        assert!(softplus_inverse(-1.0).is_err());
    }

    #[test]
    fn basis_degree_two_midpoint() {
        let s = spec(2, 0.0, 1.0, 0.1);
        let b = basis_eval_all(&s, 0.5).unwrap();
        assert!((b[0] - 0.25).abs() < 1e-15);
        assert!((b[1] - 0.5).abs() < 1e-15);
        assert!((b[2] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn basis_endpoints_degenerate() {
        let s = spec(7, -2.0, 4.0, 0.01);
        let at_l = basis_eval_all(&s, -2.0).unwrap();
        assert_eq!(at_l[0], 1.0);
        assert!(at_l[1..].iter().all(|&v| v == 0.0));
        let at_u = basis_eval_all(&s, 4.0).unwrap();
        assert_eq!(at_u[7], 1.0);
        assert!(at_u[..7].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn basis_out_of_interval_errors() {
        let s = spec(3, 0.0, 1.0, 0.1);
        assert!(basis_eval_all(&s, 1.0 + 1e-9).is_err());
        assert!(basis_eval_all(&s, -1e-9).is_err());
    }

    #[test]
    fn partition_of_unity_and_positivity() {
        let s = spec(15, -3.0, 3.0, 0.01);
        let mut rng = Rng::new(11);
        for _ in 0..1000 {
            let x = rng.uniform_range(-3.0, 3.0);
            let b = basis_eval_all(&s, x).unwrap();
            let sum: f64 = b.iter().sum();
            assert!((sum - 1.0).abs() < 1e-13, "sum {sum} at x={x}");
            assert!(b.iter().all(|&v| v >= -1e-15));
        }
    }

    #[test]
    fn poly_eval_constant_coefficients() {
        let s = spec(6, -1.0, 2.0, 0.01);
        let c = vec![5.0; 7];
        for i in 0..20 {
            let x = -1.0 + 3.0 * i as f64 / 19.0;
            assert!((poly_eval(&c, &s, x).unwrap() - 5.0).abs() < 1e-13);
        }
    }

    fn linear_precision_coeffs(s: &BernsteinSpec) -> Vec<f64> {
        (0..=s.degree)
            .map(|k| s.lower + k as f64 * s.width() / s.degree as f64)
            .collect()
    }

    #[test]
    fn poly_eval_linear_precision() {
        let s = spec(9, -3.0, 3.0, 0.01);
        let c = linear_precision_coeffs(&s);
        let mut rng = Rng::new(5);
        for _ in 0..1000 {
            let x = rng.uniform_range(-3.0, 3.0);
            assert!((poly_eval(&c, &s, x).unwrap() - x).abs() < 1e-12);
        }
    }

    #[test]
    fn poly_eval_hand_case() {
        let s = spec(2, 0.0, 1.0, 0.1);
        let v = poly_eval(&[0.0, 1.0, 0.0], &s, 0.5).unwrap();
        assert!((v - 0.5).abs() < 1e-15);
    }

    #[test]
    fn derivative_of_linear_precision_is_one() {
        let s = spec(9, -3.0, 3.0, 0.01);
        let c = linear_precision_coeffs(&s);
        for i in 0..50 {
            let x = -3.0 + 6.0 * i as f64 / 49.0;
            assert!((poly_derivative(&c, &s, x).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn derivative_of_constant_is_zero() {
        let s = spec(4, 0.0, 1.0, 0.1);
        assert_eq!(poly_derivative(&[2.0; 5], &s, 0.3).unwrap(), 0.0);
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let s = spec(8, -2.0, 2.0, 0.01);
        let mut rng = Rng::new(23);
        let h = 1e-6;
        for _ in 0..200 {
            let c: Vec<f64> = (0..=8).map(|_| rng.uniform_range(-2.0, 2.0)).collect();
            let x = rng.uniform_range(-2.0 + 2.0 * h, 2.0 - 2.0 * h);
            let fd = (poly_eval(&c, &s, x + h).unwrap() - poly_eval(&c, &s, x - h).unwrap())
                / (2.0 * h);
            let an = poly_derivative(&c, &s, x).unwrap();
            assert!((fd - an).abs() < 1e-7, "fd {fd} vs analytic {an}");
        }
    }

    #[test]
    fn value_and_derivative_agrees_with_separate_calls() {
        let s = spec(9, -3.0, 3.0, 0.01);
        let mut rng = Rng::new(31);
        let mut scratch = vec![0.0; 10];
        for _ in 0..200 {
            let c: Vec<f64> = (0..=9).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
            let x = rng.uniform_range(-3.0, 3.0);
            let (v, d) = eval_value_and_derivative(&c, &s, x, &mut scratch);
            assert_eq!(v, poly_eval(&c, &s, x).unwrap());
            assert_eq!(d, poly_derivative(&c, &s, x).unwrap());
        }
    }

    #[test]
    fn reconstruct_frozen_example() {
        // n=2, c0=0, rho=[0,0], delta=0.01: steps of ln2 + 0.01
        let cc = ConstrainedCoefficients {
            c0: 0.0,
            rho: vec![0.0, 0.0],
        };
        let c = reconstruct_coefficients(&cc, 0.01);
        assert_eq!(c[0], 0.0);
        assert!((c[1] - 0.7031471805599453).abs() < 1e-15);
        assert!((c[2] - 1.4062943611198906).abs() < 1e-15);
    }

    #[test]
    fn reconstruct_steps_never_below_delta() {
        let mut rng = Rng::new(77);
        for _ in 0..200 {
            let n = 1 + rng.below(12);
            let delta = 0.5 / n as f64;
            let cc = ConstrainedCoefficients {
                c0: rng.uniform_range(-2.0, 2.0),
                rho: (0..n).map(|_| rng.uniform_range(-40.0, 10.0)).collect(),
            };
            let c = reconstruct_coefficients(&cc, delta);
            for k in 0..n {
                // cumulative-sum rounding can sit an ulp under the margin
                assert!(c[k + 1] - c[k] >= delta - BOUND_SLACK, "step below delta");
            }
        }
    }

    #[test]
    fn reconstruct_saturated_steps_sum_to_n_delta() {
        let cc = ConstrainedCoefficients {
            c0: 1.5,
            rho: vec![-700.0; 5],
        };
        let c = reconstruct_coefficients(&cc, 0.01);
        assert!((c[5] - c[0] - 5.0 * 0.01).abs() < 1e-15);
    }

    #[test]
    fn init_unit_span_frozen_value() {
        let s = spec(9, -3.0, 3.0, 0.01);
        let cc = init_rho(&s, InitMode::UnitSpan).unwrap();
        assert_eq!(cc.c0, 0.0);
        assert_eq!(cc.rho.len(), 9);
        for &r in &cc.rho {
            assert!((r - (-2.2405537601711052)).abs() < 1e-12, "rho = {r}");
            // each step reconstructs to exactly 1/n
            assert!((softplus(r) + 0.01 - 1.0 / 9.0).abs() < 1e-15);
        }
    }

    #[test]
    fn init_unit_span_slope_is_inverse_width() {
        let s = spec(9, -3.0, 3.0, 0.01);
        let cc = init_rho(&s, InitMode::UnitSpan).unwrap();
        let c = reconstruct_coefficients(&cc, s.delta);
        for i in 0..50 {
            let x = -3.0 + 6.0 * (i as f64 + 0.5) / 50.0;
            let d = poly_derivative(&c, &s, x).unwrap();
            assert!((d - 1.0 / 6.0).abs() < 1e-12, "slope {d}");
        }
    }

    #[test]
    fn init_identity_reproduces_input() {
        let s = spec(9, -3.0, 3.0, 0.01);
        let cc = init_rho(&s, InitMode::Identity).unwrap();
        let c = reconstruct_coefficients(&cc, s.delta);
        let mut rng = Rng::new(2);
        for _ in 0..1000 {
            let x = rng.uniform_range(-3.0, 3.0);
            assert!((poly_eval(&c, &s, x).unwrap() - x).abs() < 1e-12);
        }
    }

    #[test]
    fn init_rejects_oversized_delta() {
        // spec-level guard: delta must stay below 1/n
        assert!(BernsteinSpec::new(9, -3.0, 3.0, 0.2).is_err());
        // identity mode on a narrow interval needs delta < (u-l)/n
        let s = BernsteinSpec::new(4, 0.0, 0.4, 0.11).unwrap();
        assert!(init_rho(&s, InitMode::Identity).is_err());
        assert!(init_rho(&s, InitMode::UnitSpan).is_ok());
    }

    #[test]
    fn bounds_constant_steps() {
        let s = spec(5, -1.0, 1.0, 0.01);
        let c: Vec<f64> = (0..=5).map(|k| 0.3 * k as f64).collect();
        let b = derivative_bounds(&c, &s).unwrap();
        let expect = 5.0 * 0.3 / 2.0;
        assert!((b.m_lower - expect).abs() < 1e-12);
        assert!((b.m_upper - expect).abs() < 1e-12);
    }

    #[test]
    fn derivative_sandwich_sampled() {
        let s = spec(7, -3.0, 3.0, 0.01);
        let mut rng = Rng::new(41);
        for _ in 0..300 {
            let cc = ConstrainedCoefficients {
                c0: rng.uniform_range(-1.0, 1.0),
                rho: (0..7).map(|_| rng.uniform_range(-3.0, 3.0)).collect(),
            };
            let c = reconstruct_coefficients(&cc, s.delta);
            let b = derivative_bounds(&c, &s).unwrap();
            assert!(b.m_lower <= b.m_upper);
            for _ in 0..50 {
                let x = rng.uniform_range(-3.0, 3.0);
                let d = poly_derivative(&c, &s, x).unwrap();
                assert!(d >= b.m_lower - 1e-10 && d <= b.m_upper + 1e-10);
            }
        }
    }

    #[test]
    fn constrained_coefficients_respect_floor() {
        let s = spec(9, -3.0, 3.0, 0.01);
        let mut rng = Rng::new(53);
        for _ in 0..200 {
            let cc = ConstrainedCoefficients {
                c0: rng.uniform_range(-2.0, 2.0),
                rho: (0..9).map(|_| rng.uniform_range(-30.0, 5.0)).collect(),
            };
            let c = reconstruct_coefficients(&cc, s.delta);
            let b = derivative_bounds(&c, &s).unwrap();
            assert!(b.m_lower >= s.derivative_floor() - BOUND_SLACK);
        }
    }

    #[test]
    fn floor_matches_reference_values() {
        assert_eq!(spec(9, -3.0, 3.0, 0.01).derivative_floor(), 0.015);
        assert_eq!(spec(9, -5.0, 5.0, 0.01).derivative_floor(), 0.009);
        assert_eq!(spec(15, -3.0, 3.0, 0.05).derivative_floor(), 0.125);
    }

    #[test]
    fn upper_bound_holds_for_random_sets() {
        let s = spec(6, -2.0, 2.0, 0.01);
        let mut rng = Rng::new(61);
        for _ in 0..1000 {
            let c: Vec<f64> = (0..=6).map(|_| rng.uniform_range(-3.0, 3.0)).collect();
            assert!(upper_bound_check(&c, &s, 64).unwrap());
        }
        // trivial cases
        assert!(upper_bound_check(&[1.0; 7], &s, 8).unwrap());
        let lin = linear_precision_coeffs(&spec(5, 0.0, 1.0, 0.01));
        assert!(upper_bound_check(&lin, &spec(5, 0.0, 1.0, 0.01), 8).unwrap());
    }

    #[test]
    fn backward_c0_gradient_is_upstream() {
        let s = spec(9, -3.0, 3.0, 0.01);
        let mut rng = Rng::new(71);
        for _ in 0..100 {
            let cc = ConstrainedCoefficients {
                c0: rng.uniform_range(-1.0, 1.0),
                rho: (0..9).map(|_| rng.uniform_range(-2.0, 2.0)).collect(),
            };
            let x = rng.uniform_range(-3.0, 3.0);
            let up = rng.uniform_range(-2.0, 2.0);
            let g = activation_backward(&cc, &s, x, up).unwrap();
            assert!((g.c0 - up).abs() < 1e-13);
        }
    }

    #[test]
    fn backward_at_upper_endpoint() {
        let s = spec(5, -1.0, 1.0, 0.01);
        let cc = ConstrainedCoefficients {
            c0: 0.2,
            rho: vec![0.4, -0.3, 1.0, 0.0, -1.2],
        };
        let g = activation_backward(&cc, &s, 1.0, 1.5).unwrap();
        for (j, &r) in cc.rho.iter().enumerate() {
            assert!(
                (g.rho[j] - 1.5 * sigmoid(r)).abs() < 1e-13,
                "rho grad {j} at endpoint"
            );
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let s = spec(6, -2.0, 2.0, 0.02);
        let mut rng = Rng::new(83);
        let h = 1e-6;
        for _ in 0..100 {
            let cc = ConstrainedCoefficients {
                c0: rng.uniform_range(-1.0, 1.0),
                rho: (0..6).map(|_| rng.uniform_range(-2.0, 2.0)).collect(),
            };
            let x = rng.uniform_range(-2.0 + 2.0 * h, 2.0 - 2.0 * h);
            let up = rng.uniform_range(0.5, 2.0);
            let g = activation_backward(&cc, &s, x, up).unwrap();
            let eval = |cc: &ConstrainedCoefficients, x: f64| {
                let c = reconstruct_coefficients(cc, s.delta);
                up * poly_eval(&c, &s, x).unwrap()
            };
            let fd_x = (eval(&cc, x + h) - eval(&cc, x - h)) / (2.0 * h);
            assert!((fd_x - g.x).abs() < 1e-7, "x grad {} vs {}", g.x, fd_x);
            let mut cp = cc.clone();
            cp.c0 += h;
            let mut cm = cc.clone();
            cm.c0 -= h;
            let fd_c0 = (eval(&cp, x) - eval(&cm, x)) / (2.0 * h);
            assert!((fd_c0 - g.c0).abs() < 1e-7);
            for j in 0..6 {
                let mut cp = cc.clone();
                cp.rho[j] += h;
                let mut cm = cc.clone();
                cm.rho[j] -= h;
                let fd = (eval(&cp, x) - eval(&cm, x)) / (2.0 * h);
                assert!((fd - g.rho[j]).abs() < 1e-7, "rho {j}: {} vs {}", g.rho[j], fd);
            }
        }
    }

    #[test]
    fn diagonal_bound_on_constrained_layer() {
        let s = spec(9, -3.0, 3.0, 0.01);
        let mut rng = Rng::new(97);
        let coeffs: Vec<Vec<f64>> = (0..16)
            .map(|_| {
                let cc = ConstrainedCoefficients {
                    c0: rng.uniform_range(-1.0, 1.0),
                    rho: (0..9).map(|_| rng.uniform_range(-5.0, 5.0)).collect(),
                };
                reconstruct_coefficients(&cc, s.delta)
            })
            .collect();
        let (holds, viol) = check_diagonal_bound(&coeffs, &s).unwrap();
        assert!(holds);
        assert!(viol.is_empty());
    }

    #[test]
    fn diagonal_bound_flags_flat_neuron() {
        let s = spec(3, -1.0, 1.0, 0.05);
        let good = reconstruct_coefficients(
            &init_rho(&s, InitMode::UnitSpan).unwrap(),
            s.delta,
        );
        let flat = vec![0.7; 4];
        let (holds, viol) = check_diagonal_bound(&[good, flat], &s).unwrap();
        assert!(!holds);
        assert_eq!(viol, vec![1]);
    }

    #[test]
    fn diagonal_bound_accepts_decreasing_branch() {
        let s = spec(4, -1.0, 1.0, 0.1);
        let increasing = reconstruct_coefficients(
            &init_rho(&s, InitMode::UnitSpan).unwrap(),
            s.delta,
        );
        let mirrored: Vec<f64> = increasing.iter().map(|v| -v).collect();
        let (holds, viol) = check_diagonal_bound(&[mirrored], &s).unwrap();
        assert!(holds, "violations {viol:?}");
    }

    #[test]
    fn strict_monotonicity_of_constrained_polynomial() {
        let s = spec(9, -3.0, 3.0, 0.01);
        let mut rng = Rng::new(101);
        let cc = ConstrainedCoefficients {
            c0: rng.uniform_range(-1.0, 1.0),
            rho: (0..9).map(|_| rng.uniform_range(-8.0, 2.0)).collect(),
        };
        let c = reconstruct_coefficients(&cc, s.delta);
        let mut xs: Vec<f64> = (0..500).map(|_| rng.uniform_range(-3.0, 3.0)).collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let vals: Vec<f64> = xs.iter().map(|&x| poly_eval(&c, &s, x).unwrap()).collect();
        for w in vals.windows(2) {
            assert!(w[0] < w[1], "not strictly increasing");
        }
    }
}
