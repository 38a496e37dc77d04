//! Forward evaluation and exact reverse-mode backpropagation.

use super::params::{CoeffGrads, Gradients, LayerGrads, LayerParams, Parameters};
use super::{ActivationKind, LayerSpec, Network, SELU_ALPHA, SELU_LAMBDA};
use crate::bernstein::{
    basis_eval_all, eval_value_and_derivative, reconstruct_coefficients, sigmoid,
};
use crate::error::{Error, Result};
use crate::numcore::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone)]
pub enum LayerCache {
    Linear {
        input: Matrix,
    },
    BatchNorm {
        x_hat: Matrix,
        inv_std: Vec<f64>,
    },
    Clamp {
        input: Matrix,
    },
    Activation {
        /// The value the activation actually saw (post-clamp for Bernstein).
        input: Matrix,
        /// sigma'(input), entry for entry.
        derivative: Matrix,
    },
    Residual {
        inner: Vec<LayerCache>,
    },
    None,
}

#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub(crate) layers: Vec<LayerCache>,
    pub(crate) mode: Mode,
    pub(crate) batch_rows: usize,
}

impl ForwardCache {
    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn batch_rows(&self) -> usize {
        self.batch_rows
    }

    /// Derivative matrices of every activation layer in forward order.
    pub fn activation_derivatives(&self) -> Vec<&Matrix> {
        fn walk<'a>(layers: &'a [LayerCache], out: &mut Vec<&'a Matrix>) {
            for l in layers {
                match l {
                    LayerCache::Activation { derivative, .. } => out.push(derivative),
                    LayerCache::Residual { inner } => walk(inner, out),
                    _ => {}
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.layers, &mut out);
        out
    }

    /// Fraction of clamped entries per Clamp layer, forward order.
    pub fn clamp_saturation(&self, net: &Network) -> Vec<f64> {
        fn walk(specs: &[LayerSpec], caches: &[LayerCache], out: &mut Vec<f64>) {
            for (s, c) in specs.iter().zip(caches) {
                match (s, c) {
                    (LayerSpec::Clamp { lower, upper, .. }, LayerCache::Clamp { input }) => {
                        let total = input.data().len();
                        let clipped = input
                            .data()
                            .iter()
                            .filter(|&&v| v < *lower || v > *upper)
                            .count();
                        out.push(clipped as f64 / total.max(1) as f64);
                    }
                    (LayerSpec::Residual { inner }, LayerCache::Residual { inner: ci }) => {
                        walk(inner, ci, out)
                    }
                    _ => {}
                }
            }
        }
        let mut out = Vec::new();
        walk(net.layers(), &self.layers, &mut out);
        out
    }
}

/// Per-activation-layer backprop signal: (sum of |dL/d output|, entries).
/// The gradients are those of the batch-mean loss; multiply by the batch
/// size for per-sample-loss scaling.
#[derive(Debug, Clone, Default)]
pub struct SignalStats {
    pub per_activation: Vec<(f64, usize)>,
}

fn selu(x: f64) -> (f64, f64) {
    if x > 0.0 {
        (SELU_LAMBDA * x, SELU_LAMBDA)
    } else {
        let e = x.exp();
        (SELU_LAMBDA * SELU_ALPHA * (e - 1.0), SELU_LAMBDA * SELU_ALPHA * e)
    }
}

fn gelu(x: f64) -> (f64, f64) {
    let cdf = 0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2));
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    (x * cdf, cdf + x * pdf)
}

/// Scalar value and derivative of a fixed activation. ReLU-family
/// derivatives at the kink use the x <= 0 branch (sigma'(0) = 0 for ReLU).
fn fixed_act(kind: &ActivationKind, x: f64) -> (f64, f64) {
    match kind {
        ActivationKind::Relu => {
            if x > 0.0 {
                (x, 1.0)
            } else {
                (0.0, 0.0)
            }
        }
        ActivationKind::LeakyRelu { slope } => {
            if x > 0.0 {
                (x, 1.0)
            } else {
                (slope * x, *slope)
            }
        }
        ActivationKind::Selu => selu(x),
        ActivationKind::Gelu => gelu(x),
        ActivationKind::Bernstein { .. } => unreachable!("bernstein handled separately"),
    }
}

pub fn forward(
    net: &Network,
    params: &mut Parameters,
    batch: &Matrix,
    mode: Mode,
) -> Result<(Matrix, ForwardCache)> {
    if batch.cols() != net.input_width() {
        return Err(Error::Shape(format!(
            "batch width {} vs network input {}",
            batch.cols(),
            net.input_width()
        )));
    }
    let rows = batch.rows();
    let (out, caches) = forward_layers(net.layers(), &mut params.layers, batch.clone(), mode)?;
    Ok((
        out,
        ForwardCache {
            layers: caches,
            mode,
            batch_rows: rows,
        },
    ))
}

fn forward_layers(
    specs: &[LayerSpec],
    params: &mut [LayerParams],
    input: Matrix,
    mode: Mode,
) -> Result<(Matrix, Vec<LayerCache>)> {
    let mut caches = Vec::with_capacity(specs.len());
    let mut x = input;
    for (spec, p) in specs.iter().zip(params.iter_mut()) {
        let (y, cache) = forward_one(spec, p, x, mode)?;
        caches.push(cache);
        x = y;
    }
    Ok((x, caches))
}

fn forward_one(
    spec: &LayerSpec,
    params: &mut LayerParams,
    x: Matrix,
    mode: Mode,
) -> Result<(Matrix, LayerCache)> {
    match (spec, params) {
        (LayerSpec::Linear { .. }, LayerParams::Linear { weights, bias }) => {
            let mut z = x.matmul(weights)?;
            for r in 0..z.rows() {
                let row = z.row_mut(r);
                for (v, b) in row.iter_mut().zip(bias.iter()) {
                    *v += b;
                }
            }
            Ok((z, LayerCache::Linear { input: x }))
        }
        (
            LayerSpec::BatchNorm { eps, momentum, affine, .. },
            LayerParams::BatchNorm { gamma, beta, running_mean, running_var },
        ) => {
            let n = x.rows();
            let d = x.cols();
            if n == 0 {
                return Err(Error::Shape("batch norm over empty batch".into()));
            }
            let (mean, var): (Vec<f64>, Vec<f64>) = match mode {
                Mode::Train => {
                    let mean = x.col_means();
                    let mut var = vec![0.0; d];
                    for r in 0..n {
                        let row = x.row(r);
                        for j in 0..d {
                            let c = row[j] - mean[j];
                            var[j] += c * c;
                        }
                    }
                    for v in &mut var {
                        *v /= n as f64;
                    }
                    // running statistics use the unbiased variance
                    let unbias = if n > 1 { n as f64 / (n - 1) as f64 } else { 1.0 };
                    for j in 0..d {
                        running_mean[j] = (1.0 - momentum) * running_mean[j] + momentum * mean[j];
                        running_var[j] =
                            (1.0 - momentum) * running_var[j] + momentum * var[j] * unbias;
                    }
                    (mean, var)
                }
                Mode::Eval => (running_mean.clone(), running_var.clone()),
            };
            let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
            let mut x_hat = x;
            for r in 0..n {
                let row = x_hat.row_mut(r);
                for j in 0..d {
                    row[j] = (row[j] - mean[j]) * inv_std[j];
                }
            }
            let mut y = x_hat.clone();
            if *affine {
                for r in 0..n {
                    let row = y.row_mut(r);
                    for j in 0..d {
                        row[j] = gamma[j] * row[j] + beta[j];
                    }
                }
            }
            Ok((y, LayerCache::BatchNorm { x_hat, inv_std }))
        }
        (LayerSpec::Clamp { lower, upper, .. }, LayerParams::None) => {
            let y = x.map(|v| v.clamp(*lower, *upper));
            Ok((y, LayerCache::Clamp { input: x }))
        }
        (LayerSpec::Activation { kind }, LayerParams::None) => {
            let mut y = Matrix::zeros(x.rows(), x.cols());
            let mut deriv = Matrix::zeros(x.rows(), x.cols());
            for r in 0..x.rows() {
                for c in 0..x.cols() {
                    let (v, d) = fixed_act(kind, x.get(r, c));
                    y.set(r, c, v);
                    deriv.set(r, c, d);
                }
            }
            Ok((
                y,
                LayerCache::Activation {
                    input: x,
                    derivative: deriv,
                },
            ))
        }
        (
            LayerSpec::Activation {
                kind: ActivationKind::Bernstein { spec: bspec, .. },
            },
            LayerParams::Bernstein { coeffs },
        ) => {
            let width = x.cols();
            let shared = coeffs.len() == 1;
            if !shared && coeffs.len() != width {
                return Err(Error::Shape(format!(
                    "{} coefficient sets for width {width}",
                    coeffs.len()
                )));
            }
            let recon: Vec<Vec<f64>> = coeffs
                .iter()
                .map(|cc| reconstruct_coefficients(cc, bspec.delta))
                .collect();
            let mut y = Matrix::zeros(x.rows(), x.cols());
            let mut deriv = Matrix::zeros(x.rows(), x.cols());
            let mut scratch = vec![0.0; bspec.degree + 1];
            for r in 0..x.rows() {
                for c in 0..width {
                    let v = x.get(r, c);
                    if v < bspec.lower || v > bspec.upper || v.is_nan() {
                        return Err(Error::Domain(format!(
                            "pre-activation {v} outside [{}, {}]; stabilize with clamp",
                            bspec.lower, bspec.upper
                        )));
                    }
                    let set = if shared { &recon[0] } else { &recon[c] };
                    let (val, der) = eval_value_and_derivative(set, bspec, v, &mut scratch);
                    y.set(r, c, val);
                    deriv.set(r, c, der);
                }
            }
            Ok((
                y,
                LayerCache::Activation {
                    input: x,
                    derivative: deriv,
                },
            ))
        }
        (LayerSpec::Residual { inner }, LayerParams::Residual { inner: pi }) => {
            let (fy, caches) = forward_layers(inner, pi, x.clone(), mode)?;
            let y = x.add(&fy)?;
            Ok((y, LayerCache::Residual { inner: caches }))
        }
        _ => Err(Error::Shape("layer spec / params mismatch".into())),
    }
}

pub fn backward(
    net: &Network,
    params: &Parameters,
    cache: &ForwardCache,
    loss_grad: &Matrix,
) -> Result<Gradients> {
    let mut unused = SignalStats::default();
    backward_with_signal(net, params, cache, loss_grad, &mut unused)
}

/// Backward pass that also records the mean-absolute gradient arriving at
/// each activation layer's output (for the learning-signal diagnostics).
pub fn backward_with_signal(
    net: &Network,
    params: &Parameters,
    cache: &ForwardCache,
    loss_grad: &Matrix,
    signal: &mut SignalStats,
) -> Result<Gradients> {
    Ok(backward_input_grads(net, params, cache, loss_grad, signal)?.0)
}

/// Full backward returning parameter gradients plus the gradient with
/// respect to the input batch.
pub fn backward_input_grads(
    net: &Network,
    params: &Parameters,
    cache: &ForwardCache,
    loss_grad: &Matrix,
    signal: &mut SignalStats,
) -> Result<(Gradients, Matrix)> {
    if cache.mode != Mode::Train {
        return Err(Error::Config("backward needs a train-mode cache".into()));
    }
    if loss_grad.rows() != cache.batch_rows || loss_grad.cols() != net.output_width() {
        return Err(Error::Shape("loss gradient shape vs cache".into()));
    }
    let mut collected: Vec<(f64, usize)> = Vec::new();
    let (input_grad, grads) = backward_layers(
        net.layers(),
        &params.layers,
        &cache.layers,
        loss_grad.clone(),
        &mut collected,
    )?;
    collected.reverse();
    signal.per_activation = collected;
    Ok((Gradients { layers: grads }, input_grad))
}

fn backward_layers(
    specs: &[LayerSpec],
    params: &[LayerParams],
    caches: &[LayerCache],
    grad_out: Matrix,
    signal: &mut Vec<(f64, usize)>,
) -> Result<(Matrix, Vec<LayerGrads>)> {
    if specs.len() != caches.len() || specs.len() != params.len() {
        return Err(Error::Shape("stale cache: layer count mismatch".into()));
    }
    let mut grads: Vec<LayerGrads> = Vec::with_capacity(specs.len());
    let mut g = grad_out;
    for ((spec, p), c) in specs.iter().zip(params).zip(caches).rev() {
        let (gi, lg) = backward_one(spec, p, c, g, signal)?;
        grads.push(lg);
        g = gi;
    }
    grads.reverse();
    Ok((g, grads))
}

fn backward_one(
    spec: &LayerSpec,
    params: &LayerParams,
    cache: &LayerCache,
    grad_out: Matrix,
    signal: &mut Vec<(f64, usize)>,
) -> Result<(Matrix, LayerGrads)> {
    match (spec, params, cache) {
        (
            LayerSpec::Linear { .. },
            LayerParams::Linear { weights, .. },
            LayerCache::Linear { input },
        ) => {
            if input.rows() != grad_out.rows() {
                return Err(Error::Shape("stale cache: linear batch".into()));
            }
            let gw = input.transpose().matmul(&grad_out)?;
            let gb = grad_out.col_sums();
            let gx = grad_out.matmul(&weights.transpose())?;
            Ok((gx, LayerGrads::Linear { weights: gw, bias: gb }))
        }
        (
            LayerSpec::BatchNorm { affine, .. },
            LayerParams::BatchNorm { gamma, .. },
            LayerCache::BatchNorm { x_hat, inv_std },
        ) => {
            let n = x_hat.rows();
            let d = x_hat.cols();
            if grad_out.rows() != n || grad_out.cols() != d {
                return Err(Error::Shape("stale cache: batch norm".into()));
            }
            let mut g_gamma = vec![0.0; d];
            let mut g_beta = vec![0.0; d];
            for r in 0..n {
                for j in 0..d {
                    let go = grad_out.get(r, j);
                    g_gamma[j] += go * x_hat.get(r, j);
                    g_beta[j] += go;
                }
            }
            // d x_hat
            let dxh = if *affine {
                let mut m = grad_out;
                for r in 0..n {
                    let row = m.row_mut(r);
                    for j in 0..d {
                        row[j] *= gamma[j];
                    }
                }
                m
            } else {
                grad_out
            };
            let mut sum_dxh = vec![0.0; d];
            let mut sum_dxh_xhat = vec![0.0; d];
            for r in 0..n {
                for j in 0..d {
                    let v = dxh.get(r, j);
                    sum_dxh[j] += v;
                    sum_dxh_xhat[j] += v * x_hat.get(r, j);
                }
            }
            let nf = n as f64;
            let mut gx = Matrix::zeros(n, d);
            for r in 0..n {
                for j in 0..d {
                    let v = inv_std[j] / nf
                        * (nf * dxh.get(r, j)
                            - sum_dxh[j]
                            - x_hat.get(r, j) * sum_dxh_xhat[j]);
                    gx.set(r, j, v);
                }
            }
            Ok((
                gx,
                LayerGrads::BatchNorm {
                    gamma: g_gamma,
                    beta: g_beta,
                },
            ))
        }
        (
            LayerSpec::Clamp { lower, upper, straight_through },
            LayerParams::None,
            LayerCache::Clamp { input },
        ) => {
            let gx = if *straight_through {
                grad_out
            } else {
                let mut m = grad_out;
                for r in 0..m.rows() {
                    for j in 0..m.cols() {
                        let v = input.get(r, j);
                        if v < *lower || v > *upper {
                            m.set(r, j, 0.0);
                        }
                    }
                }
                m
            };
            Ok((gx, LayerGrads::None))
        }
        (
            LayerSpec::Activation { kind },
            p,
            LayerCache::Activation { input, derivative },
        ) => {
            if grad_out.rows() != input.rows() || grad_out.cols() != input.cols() {
                return Err(Error::Shape("stale cache: activation".into()));
            }
            let sum_abs: f64 = grad_out.data().iter().map(|v| v.abs()).sum();
            signal.push((sum_abs, grad_out.data().len()));
            let gx = grad_out.hadamard(derivative)?;
            match (kind, p) {
                (
                    ActivationKind::Bernstein { spec: bspec, .. },
                    LayerParams::Bernstein { coeffs },
                ) => {
                    let shared = coeffs.len() == 1;
                    let sig: Vec<Vec<f64>> = coeffs
                        .iter()
                        .map(|cc| cc.rho.iter().map(|&r| sigmoid(r)).collect())
                        .collect();
                    let n = bspec.degree;
                    let mut cgrads: Vec<CoeffGrads> = coeffs
                        .iter()
                        .map(|cc| CoeffGrads {
                            c0: 0.0,
                            rho: vec![0.0; cc.rho.len()],
                        })
                        .collect();
                    for r in 0..input.rows() {
                        for c in 0..input.cols() {
                            let up = grad_out.get(r, c);
                            if up == 0.0 {
                                continue;
                            }
                            let s = if shared { 0 } else { c };
                            let row = basis_eval_all(bspec, input.get(r, c))?;
                            cgrads[s].c0 += up;
                            let mut suffix = 0.0;
                            for j in (0..n).rev() {
                                suffix += row[j + 1];
                                cgrads[s].rho[j] += up * sig[s][j] * suffix;
                            }
                        }
                    }
                    Ok((gx, LayerGrads::Bernstein { coeffs: cgrads }))
                }
                _ => Ok((gx, LayerGrads::None)),
            }
        }
        (
            LayerSpec::Residual { inner },
            LayerParams::Residual { inner: pi },
            LayerCache::Residual { inner: ci },
        ) => {
            let (g_inner_input, inner_grads) =
                backward_layers(inner, pi, ci, grad_out.clone(), signal)?;
            let gx = grad_out.add(&g_inner_input)?;
            Ok((gx, LayerGrads::Residual { inner: inner_grads }))
        }
        _ => Err(Error::Shape("stale cache: layer kind mismatch".into())),
    }
}
