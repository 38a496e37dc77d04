//! Parameter, gradient, and walker structures mirroring the layer tree.

use super::{ActivationKind, LayerSpec, Network, Sharing};
use crate::bernstein::{init_rho, ConstrainedCoefficients, InitMode};
use crate::error::{Error, Result};
use crate::numcore::{Matrix, Rng};

#[derive(Debug, Clone, PartialEq)]
pub enum LayerParams {
    Linear {
        /// (inputs x outputs), so z = x * W + b.
        weights: Matrix,
        bias: Vec<f64>,
    },
    BatchNorm {
        gamma: Vec<f64>,
        beta: Vec<f64>,
        running_mean: Vec<f64>,
        running_var: Vec<f64>,
    },
    /// One set per neuron, or a single set when shared per layer.
    Bernstein {
        coeffs: Vec<ConstrainedCoefficients>,
    },
    None,
    Residual {
        inner: Vec<LayerParams>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    pub(crate) layers: Vec<LayerParams>,
}

#[derive(Debug, Clone)]
pub struct CoeffGrads {
    pub c0: f64,
    pub rho: Vec<f64>,
}

#[derive(Debug, Clone)]
pub enum LayerGrads {
    Linear { weights: Matrix, bias: Vec<f64> },
    BatchNorm { gamma: Vec<f64>, beta: Vec<f64> },
    Bernstein { coeffs: Vec<CoeffGrads> },
    None,
    Residual { inner: Vec<LayerGrads> },
}

#[derive(Debug, Clone)]
pub struct Gradients {
    pub(crate) layers: Vec<LayerGrads>,
}

/// Role of a parameter tensor; drives weight-decay eligibility.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    LinearWeight,
    LinearBias,
    BatchNormGamma,
    BatchNormBeta,
    BernsteinC0,
    BernsteinRho,
}

/// Weight-init stddev: variance-preserving defaults keyed on the activation
/// the linear layer feeds into. ReLU-family doubles the variance; SELU uses
/// LeCun scaling (self-normalization); Bernstein starts near-linear so it
/// also gets LeCun scaling, as does a readout layer.
fn weight_stddev(fan_in: usize, next_activation: Option<&ActivationKind>) -> f64 {
    let fan = fan_in as f64;
    match next_activation {
        Some(ActivationKind::Relu)
        | Some(ActivationKind::LeakyRelu { .. })
        | Some(ActivationKind::Gelu) => (2.0 / fan).sqrt(),
        _ => (1.0 / fan).sqrt(),
    }
}

fn next_activation<'a>(layers: &'a [LayerSpec], from: usize) -> Option<&'a ActivationKind> {
    for l in &layers[from..] {
        match l {
            LayerSpec::Activation { kind } => return Some(kind),
            LayerSpec::BatchNorm { .. } | LayerSpec::Clamp { .. } => continue,
            LayerSpec::Residual { inner } => return next_activation(inner, 0),
            LayerSpec::Linear { .. } => return None,
        }
    }
    None
}

fn init_layers(
    layers: &[LayerSpec],
    mut width: usize,
    rng: &mut Rng,
    bern_init: InitMode,
) -> Result<Vec<LayerParams>> {
    let mut out = Vec::with_capacity(layers.len());
    for (i, l) in layers.iter().enumerate() {
        let p = match l {
            LayerSpec::Linear { inputs, outputs } => {
                let std = weight_stddev(*inputs, next_activation(layers, i + 1));
                let weights = rng.normal_matrix(*inputs, *outputs, 0.0, std);
                width = *outputs;
                LayerParams::Linear {
                    weights,
                    bias: vec![0.0; *outputs],
                }
            }
            LayerSpec::BatchNorm { features, .. } => LayerParams::BatchNorm {
                gamma: vec![1.0; *features],
                beta: vec![0.0; *features],
                running_mean: vec![0.0; *features],
                running_var: vec![1.0; *features],
            },
            LayerSpec::Clamp { .. } => LayerParams::None,
            LayerSpec::Activation { kind } => match kind {
                ActivationKind::Bernstein { spec, sharing } => {
                    let sets = match sharing {
                        Sharing::PerNeuron => width,
                        Sharing::PerLayer => 1,
                    };
                    let cc = init_rho(spec, bern_init)?;
                    LayerParams::Bernstein {
                        coeffs: vec![cc; sets],
                    }
                }
                _ => LayerParams::None,
            },
            LayerSpec::Residual { inner } => LayerParams::Residual {
                inner: init_layers(inner, width, rng, bern_init)?,
            },
        };
        out.push(p);
    }
    Ok(out)
}

impl Parameters {
    pub fn init(net: &Network, rng: &mut Rng, bern_init: InitMode) -> Result<Self> {
        Ok(Parameters {
            layers: init_layers(net.layers(), net.input_width(), rng, bern_init)?,
        })
    }

    pub fn layers(&self) -> &[LayerParams] {
        &self.layers
    }

    /// Visit every trainable tensor (running statistics excluded) in a
    /// fixed depth-first order.
    pub fn for_each_param_mut(&mut self, f: &mut impl FnMut(ParamKind, &mut [f64])) {
        fn walk(layers: &mut [LayerParams], f: &mut impl FnMut(ParamKind, &mut [f64])) {
            for l in layers {
                match l {
                    LayerParams::Linear { weights, bias } => {
                        f(ParamKind::LinearWeight, weights.data_mut());
                        f(ParamKind::LinearBias, bias);
                    }
                    LayerParams::BatchNorm { gamma, beta, .. } => {
                        f(ParamKind::BatchNormGamma, gamma);
                        f(ParamKind::BatchNormBeta, beta);
                    }
                    LayerParams::Bernstein { coeffs } => {
                        for cc in coeffs {
                            f(ParamKind::BernsteinC0, std::slice::from_mut(&mut cc.c0));
                            f(ParamKind::BernsteinRho, &mut cc.rho);
                        }
                    }
                    LayerParams::None => {}
                    LayerParams::Residual { inner } => walk(inner, f),
                }
            }
        }
        walk(&mut self.layers, f);
    }

    /// Lockstep walk over parameters and their gradients; errors on any
    /// structural mismatch.
    pub fn for_each_with_grads(
        &mut self,
        grads: &Gradients,
        f: &mut impl FnMut(ParamKind, &mut [f64], &[f64]),
    ) -> Result<()> {
        fn walk(
            params: &mut [LayerParams],
            grads: &[LayerGrads],
            f: &mut impl FnMut(ParamKind, &mut [f64], &[f64]),
        ) -> Result<()> {
            if params.len() != grads.len() {
                return Err(Error::Shape("gradient tree shape mismatch".into()));
            }
            for (p, g) in params.iter_mut().zip(grads) {
                match (p, g) {
                    (
                        LayerParams::Linear { weights, bias },
                        LayerGrads::Linear { weights: gw, bias: gb },
                    ) => {
                        if weights.data().len() != gw.data().len() || bias.len() != gb.len() {
                            return Err(Error::Shape("linear gradient shape".into()));
                        }
                        f(ParamKind::LinearWeight, weights.data_mut(), gw.data());
                        f(ParamKind::LinearBias, bias, gb);
                    }
                    (
                        LayerParams::BatchNorm { gamma, beta, .. },
                        LayerGrads::BatchNorm { gamma: gg, beta: gb },
                    ) => {
                        f(ParamKind::BatchNormGamma, gamma, gg);
                        f(ParamKind::BatchNormBeta, beta, gb);
                    }
                    (
                        LayerParams::Bernstein { coeffs },
                        LayerGrads::Bernstein { coeffs: gc },
                    ) => {
                        if coeffs.len() != gc.len() {
                            return Err(Error::Shape("coefficient gradient shape".into()));
                        }
                        for (cc, g) in coeffs.iter_mut().zip(gc) {
                            f(
                                ParamKind::BernsteinC0,
                                std::slice::from_mut(&mut cc.c0),
                                std::slice::from_ref(&g.c0),
                            );
                            f(ParamKind::BernsteinRho, &mut cc.rho, &g.rho);
                        }
                    }
                    (LayerParams::None, LayerGrads::None) => {}
                    (LayerParams::Residual { inner }, LayerGrads::Residual { inner: gi }) => {
                        walk(inner, gi, f)?;
                    }
                    _ => return Err(Error::Shape("gradient tree kind mismatch".into())),
                }
            }
            Ok(())
        }
        walk(&mut self.layers, &grads.layers, f)
    }

    /// Total trainable scalar count.
    pub fn scalar_count(&mut self) -> usize {
        let mut n = 0;
        self.for_each_param_mut(&mut |_, s| n += s.len());
        n
    }

    /// Bernstein layers in forward order: (spec, sharing, coefficient sets).
    pub fn bernstein_layers<'a>(
        &'a self,
        net: &'a Network,
    ) -> Vec<(&'a crate::bernstein::BernsteinSpec, &'a [ConstrainedCoefficients])> {
        fn walk<'a>(
            specs: &'a [LayerSpec],
            params: &'a [LayerParams],
            out: &mut Vec<(&'a crate::bernstein::BernsteinSpec, &'a [ConstrainedCoefficients])>,
        ) {
            for (s, p) in specs.iter().zip(params) {
                match (s, p) {
                    (
                        LayerSpec::Activation {
                            kind: ActivationKind::Bernstein { spec, .. },
                        },
                        LayerParams::Bernstein { coeffs },
                    ) => out.push((spec, coeffs)),
                    (LayerSpec::Residual { inner }, LayerParams::Residual { inner: pi }) => {
                        walk(inner, pi, out)
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

impl Gradients {
    /// Zero gradients shaped like the given parameters.
    pub fn zeros_like(params: &Parameters) -> Self {
        fn walk(layers: &[LayerParams]) -> Vec<LayerGrads> {
            layers
                .iter()
                .map(|l| match l {
                    LayerParams::Linear { weights, bias } => LayerGrads::Linear {
                        weights: Matrix::zeros(weights.rows(), weights.cols()),
                        bias: vec![0.0; bias.len()],
                    },
                    LayerParams::BatchNorm { gamma, beta, .. } => LayerGrads::BatchNorm {
                        gamma: vec![0.0; gamma.len()],
                        beta: vec![0.0; beta.len()],
                    },
                    LayerParams::Bernstein { coeffs } => LayerGrads::Bernstein {
                        coeffs: coeffs
                            .iter()
                            .map(|cc| CoeffGrads {
                                c0: 0.0,
                                rho: vec![0.0; cc.rho.len()],
                            })
                            .collect(),
                    },
                    LayerParams::None => LayerGrads::None,
                    LayerParams::Residual { inner } => LayerGrads::Residual {
                        inner: walk(inner),
                    },
                })
                .collect()
        }
        Gradients {
            layers: walk(&params.layers),
        }
    }

    pub fn layers(&self) -> &[LayerGrads] {
        &self.layers
    }

    /// Maximum absolute gradient entry; useful for zero-grad checks.
    pub fn max_abs(&self) -> f64 {
        fn walk(layers: &[LayerGrads], m: &mut f64) {
            for l in layers {
                match l {
                    LayerGrads::Linear { weights, bias } => {
                        for v in weights.data() {
                            *m = m.max(v.abs());
                        }
                        for v in bias {
                            *m = m.max(v.abs());
                        }
                    }
                    LayerGrads::BatchNorm { gamma, beta } => {
                        for v in gamma.iter().chain(beta) {
                            *m = m.max(v.abs());
                        }
                    }
                    LayerGrads::Bernstein { coeffs } => {
                        for c in coeffs {
                            *m = m.max(c.c0.abs());
                            for v in &c.rho {
                                *m = m.max(v.abs());
                            }
                        }
                    }
                    LayerGrads::None => {}
                    LayerGrads::Residual { inner } => walk(inner, m),
                }
            }
        }
        let mut m = 0.0;
        walk(&self.layers, &mut m);
        m
    }
}
