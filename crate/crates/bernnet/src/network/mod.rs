//! Layer stack, forward pass, and manual reverse-mode backpropagation.
//!
//! A network is an ordered list of layer specs; parameters, gradients, and
//! per-batch caches are stored in parallel tree structures. Bernstein
//! activations must sit behind BatchNorm + Clamp (the stabilized stack);
//! `Network::new` enforces this, `Network::new_unstabilized` exists for
//! polynomial-degree probes that need bare Linear/Bernstein compositions.

mod checkpoint;
mod losses;
mod params;
mod pass;
mod probe;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use losses::{loss_bce_logits, loss_for_target, loss_mse, loss_softmax_ce, LossTarget};
pub use params::{CoeffGrads, Gradients, LayerGrads, LayerParams, ParamKind, Parameters};
pub use pass::{
    backward, backward_input_grads, backward_with_signal, forward, ForwardCache, LayerCache,
    Mode, SignalStats,
};
pub use probe::effective_degree_probe;

use crate::bernstein::BernsteinSpec;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Scaled-exponential-linear constants.
pub const SELU_ALPHA: f64 = 1.6732632423543772;
pub const SELU_LAMBDA: f64 = 1.0507009873554805;

/// How Bernstein coefficient sets are shared within a layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sharing {
    /// Each neuron owns its own (c0, rho). Default.
    PerNeuron,
    /// One coefficient set for the whole layer.
    PerLayer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationKind {
    Relu,
    LeakyRelu { slope: f64 },
    Selu,
    Gelu,
    Bernstein { spec: BernsteinSpec, sharing: Sharing },
}

impl ActivationKind {
    pub fn name(&self) -> String {
        match self {
            ActivationKind::Relu => "relu".into(),
            ActivationKind::LeakyRelu { slope } => format!("leaky_relu_{slope}"),
            ActivationKind::Selu => "selu".into(),
            ActivationKind::Gelu => "gelu".into(),
            ActivationKind::Bernstein { spec, .. } => format!(
                "bern_{}_{}_[{},{}]",
                spec.degree, spec.delta, spec.lower, spec.upper
            ),
        }
    }

    pub fn bernstein_spec(&self) -> Option<&BernsteinSpec> {
        match self {
            ActivationKind::Bernstein { spec, .. } => Some(spec),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerSpec {
    Linear {
        inputs: usize,
        outputs: usize,
    },
    BatchNorm {
        features: usize,
        eps: f64,
        momentum: f64,
        affine: bool,
    },
    Clamp {
        lower: f64,
        upper: f64,
        /// Pass the gradient through saturated entries instead of zeroing it.
        straight_through: bool,
    },
    Activation {
        kind: ActivationKind,
    },
    Residual {
        inner: Vec<LayerSpec>,
    },
}

impl LayerSpec {
    pub fn batch_norm(features: usize) -> Self {
        LayerSpec::BatchNorm {
            features,
            eps: 1e-5,
            momentum: 0.1,
            affine: true,
        }
    }

    pub fn clamp(lower: f64, upper: f64) -> Self {
        LayerSpec::Clamp {
            lower,
            upper,
            straight_through: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    input_width: usize,
    output_width: usize,
    layers: Vec<LayerSpec>,
}

impl Network {
    /// Build and validate a stabilized network: dimensions must compose and
    /// every Bernstein activation must be fronted by BatchNorm then a Clamp
    /// matching its interval.
    pub fn new(input_width: usize, layers: Vec<LayerSpec>) -> Result<Self> {
        let net = Self::new_unstabilized(input_width, layers)?;
        check_stabilization(&net.layers)?;
        Ok(net)
    }

    /// Dimension-checked construction without the BatchNorm+Clamp guard;
    /// for degree-probe stacks that are bare Linear/Bernstein compositions.
    pub fn new_unstabilized(input_width: usize, layers: Vec<LayerSpec>) -> Result<Self> {
        if input_width == 0 {
            return Err(Error::Config("input width must be positive".into()));
        }
        let output_width = check_widths(&layers, input_width)?;
        Ok(Network {
            input_width,
            output_width,
            layers,
        })
    }

    pub fn input_width(&self) -> usize {
        self.input_width
    }

    pub fn output_width(&self) -> usize {
        self.output_width
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    /// Activation kinds in forward order, looking through residual blocks.
    pub fn activation_kinds(&self) -> Vec<&ActivationKind> {
        fn walk<'a>(layers: &'a [LayerSpec], out: &mut Vec<&'a ActivationKind>) {
            for l in layers {
                match l {
                    LayerSpec::Activation { kind } => out.push(kind),
                    LayerSpec::Residual { inner } => walk(inner, out),
                    _ => {}
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.layers, &mut out);
        out
    }

    pub fn activation_count(&self) -> usize {
        self.activation_kinds().len()
    }
}

fn check_widths(layers: &[LayerSpec], input: usize) -> Result<usize> {
    let mut w = input;
    for (i, l) in layers.iter().enumerate() {
        match l {
            LayerSpec::Linear { inputs, outputs } => {
                if *inputs != w {
                    return Err(Error::Shape(format!(
                        "layer {i}: linear expects {inputs} inputs, stack provides {w}"
                    )));
                }
                if *outputs == 0 {
                    return Err(Error::Config(format!("layer {i}: zero outputs")));
                }
                w = *outputs;
            }
            LayerSpec::BatchNorm { features, eps, momentum, .. } => {
                if *features != w {
                    return Err(Error::Shape(format!(
                        "layer {i}: batch norm over {features} features, stack provides {w}"
                    )));
                }
                if !(*eps > 0.0) || !(*momentum > 0.0 && *momentum <= 1.0) {
                    return Err(Error::Config(format!("layer {i}: bad batch-norm constants")));
                }
            }
            LayerSpec::Clamp { lower, upper, .. } => {
                if !(upper > lower) {
                    return Err(Error::Config(format!("layer {i}: empty clamp interval")));
                }
            }
            LayerSpec::Activation { kind } => {
                if let ActivationKind::Bernstein { spec, .. } = kind {
                    spec.validate()?;
                }
                if let ActivationKind::LeakyRelu { slope } = kind {
                    if !slope.is_finite() {
                        return Err(Error::Config(format!("layer {i}: bad slope")));
                    }
                }
            }
            LayerSpec::Residual { inner } => {
                let inner_out = check_widths(inner, w)?;
                if inner_out != w {
                    return Err(Error::Shape(format!(
                        "layer {i}: residual inner stack maps width {w} to {inner_out}; identity skip needs equal widths"
                    )));
                }
            }
        }
    }
    Ok(w)
}

/// Every Bernstein activation must directly follow Clamp(l, u) which
/// follows BatchNorm, the Clamp interval matching the activation interval.
fn check_stabilization(layers: &[LayerSpec]) -> Result<()> {
    for (i, l) in layers.iter().enumerate() {
        match l {
            LayerSpec::Activation {
                kind: ActivationKind::Bernstein { spec, .. },
            } => {
                let clamp_ok = matches!(
                    i.checked_sub(1).map(|j| &layers[j]),
                    Some(LayerSpec::Clamp { lower, upper, .. })
                        if *lower == spec.lower && *upper == spec.upper
                );
                let bn_ok = matches!(
                    i.checked_sub(2).map(|j| &layers[j]),
                    Some(LayerSpec::BatchNorm { .. })
                );
                if !clamp_ok || !bn_ok {
                    return Err(Error::Config(format!(
                        "layer {i}: Bernstein activation requires BatchNorm then Clamp[{}, {}] in front; \
                         use new_unstabilized for probe stacks",
                        spec.lower, spec.upper
                    )));
                }
            }
            LayerSpec::Residual { inner } => check_stabilization(inner)?,
            _ => {}
        }
    }
    Ok(())
}

/// Standard stack builders used by the experiment configs.
pub mod stacks {
    use super::*;

    /// Fully connected net: for each hidden width a Linear layer followed by
    /// the activation's required pre-processing and the activation itself,
    /// then a final Linear readout.
    pub fn mlp(
        input: usize,
        hidden: &[usize],
        output: usize,
        kind: &ActivationKind,
        batch_norm: bool,
        residual: bool,
    ) -> Result<Network> {
        let mut layers = Vec::new();
        let mut w = input;
        for (i, &h) in hidden.iter().enumerate() {
            if residual && w == h {
                // identity-skip block: x + act(BN(Wx+b))
                let mut inner = vec![LayerSpec::Linear { inputs: w, outputs: h }];
                push_activation(&mut inner, h, kind, batch_norm)?;
                layers.push(LayerSpec::Residual { inner });
            } else {
                if residual && i > 0 {
                    // width change inside a residual net: plain adapter
                }
                layers.push(LayerSpec::Linear { inputs: w, outputs: h });
                push_activation(&mut layers, h, kind, batch_norm)?;
            }
            w = h;
        }
        layers.push(LayerSpec::Linear { inputs: w, outputs: output });
        Network::new(input, layers)
    }

    fn push_activation(
        layers: &mut Vec<LayerSpec>,
        width: usize,
        kind: &ActivationKind,
        batch_norm: bool,
    ) -> Result<()> {
        match kind {
            ActivationKind::Bernstein { spec, .. } => {
                // BatchNorm + Clamp are mandatory for Bernstein stability,
                // independent of the batch_norm flag.
                layers.push(LayerSpec::batch_norm(width));
                layers.push(LayerSpec::clamp(spec.lower, spec.upper));
                layers.push(LayerSpec::Activation { kind: kind.clone() });
            }
            _ => {
                if batch_norm {
                    layers.push(LayerSpec::batch_norm(width));
                }
                layers.push(LayerSpec::Activation { kind: kind.clone() });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bern_kind() -> ActivationKind {
        ActivationKind::Bernstein {
            spec: BernsteinSpec::new(5, -3.0, 3.0, 0.01).unwrap(),
            sharing: Sharing::PerNeuron,
        }
    }

    #[test]
    fn width_mismatch_rejected() {
        let layers = vec![
            LayerSpec::Linear { inputs: 4, outputs: 8 },
            LayerSpec::Linear { inputs: 9, outputs: 2 },
        ];
        assert!(Network::new(4, layers).is_err());
    }

    #[test]
    fn bernstein_without_clamp_rejected() {
        let layers = vec![
            LayerSpec::Linear { inputs: 4, outputs: 8 },
            LayerSpec::Activation { kind: bern_kind() },
        ];
        assert!(Network::new(4, layers.clone()).is_err());
        assert!(Network::new_unstabilized(4, layers).is_ok());
    }

    #[test]
    fn clamp_interval_must_match_spec() {
        let layers = vec![
            LayerSpec::Linear { inputs: 4, outputs: 8 },
            LayerSpec::batch_norm(8),
            LayerSpec::clamp(-5.0, 5.0),
            LayerSpec::Activation { kind: bern_kind() },
        ];
        assert!(Network::new(4, layers).is_err());
    }

    #[test]
    fn mlp_builder_stabilizes_bernstein() {
        let net = stacks::mlp(784, &[50, 50], 10, &bern_kind(), true, false).unwrap();
        assert_eq!(net.output_width(), 10);
        assert_eq!(net.activation_count(), 2);
        // pattern: Linear BN Clamp Act, Linear BN Clamp Act, Linear
        assert_eq!(net.layers().len(), 9);
        Network::new(784, net.layers().to_vec()).unwrap();
    }

    #[test]
    fn residual_builder_preserves_width() {
        let relu = ActivationKind::Relu;
        let net = stacks::mlp(28, &[32, 32, 32], 10, &relu, true, true).unwrap();
        // first block 28 -> 32 is a plain adapter, later ones residual
        let residual_count = net
            .layers()
            .iter()
            .filter(|l| matches!(l, LayerSpec::Residual { .. }))
            .count();
        assert_eq!(residual_count, 2);
        assert_eq!(net.activation_count(), 3);
    }

    #[test]
    fn residual_width_change_rejected() {
        let inner = vec![LayerSpec::Linear { inputs: 4, outputs: 6 }];
        assert!(Network::new(4, vec![LayerSpec::Residual { inner }]).is_err());
    }
}
