//! Polynomial-degree probe: a scalar-input stack of Linear and Bernstein
//! layers is algebraically a univariate polynomial of degree at most n^L.
//! Fitting the network's graph with a polynomial of that degree must leave
//! a near-zero residual; one degree less must not (for generic parameters).

use super::pass::{forward, Mode};
use super::{ActivationKind, LayerSpec, Network, Parameters};
use crate::error::{Error, Result};
use crate::numcore::{chebyshev_nodes, polyfit_max_residual, Matrix};

fn assert_probe_friendly(layers: &[LayerSpec]) -> Result<()> {
    for l in layers {
        match l {
            LayerSpec::Linear { .. } => {}
            LayerSpec::Activation {
                kind: ActivationKind::Bernstein { .. },
            } => {}
            other => {
                return Err(Error::Config(format!(
                    "degree probe allows only Linear and Bernstein layers, found {other:?}"
                )))
            }
        }
    }
    Ok(())
}

/// Evaluate the network on Chebyshev nodes over `domain` and return the
/// maximum absolute residual of a degree-`probe_degree` least-squares fit.
/// Any pre-activation escaping a Bernstein interval is reported as an
/// error, not clamped: the caller must size the weights.
pub fn effective_degree_probe(
    net: &Network,
    params: &Parameters,
    domain: (f64, f64),
    probe_degree: usize,
    sample_count: usize,
) -> Result<f64> {
    assert_probe_friendly(net.layers())?;
    if net.input_width() != 1 || net.output_width() != 1 {
        return Err(Error::Config("degree probe needs a scalar-to-scalar net".into()));
    }
    if sample_count <= probe_degree + 1 {
        return Err(Error::Config("not enough samples for the fit degree".into()));
    }
    let (lo, hi) = domain;
    if !(hi > lo) {
        return Err(Error::Domain("empty probe domain".into()));
    }
    let xs = chebyshev_nodes(sample_count, lo, hi);
    let batch = Matrix::from_vec(xs.len(), 1, xs.clone())?;
    let mut p = params.clone();
    let (out, _) = forward(net, &mut p, &batch, Mode::Eval)?;
    let ys: Vec<f64> = (0..out.rows()).map(|r| out.get(r, 0)).collect();
    polyfit_max_residual(&xs, &ys, probe_degree)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bernstein::{BernsteinSpec, InitMode};
    use crate::network::Sharing;
    use crate::numcore::Rng;

    fn bern(n: usize) -> LayerSpec {
        LayerSpec::Activation {
            kind: ActivationKind::Bernstein {
                spec: BernsteinSpec::new(n, -3.0, 3.0, 0.01).unwrap(),
                sharing: Sharing::PerNeuron,
            },
        }
    }

    /// Scalar in, `width` hidden units, scalar out, `depth` Bernstein layers.
    fn probe_net(n: usize, depth: usize, width: usize) -> Network {
        let mut layers = vec![LayerSpec::Linear { inputs: 1, outputs: width }];
        layers.push(bern(n));
        for _ in 1..depth {
            layers.push(LayerSpec::Linear { inputs: width, outputs: width });
            layers.push(bern(n));
        }
        layers.push(LayerSpec::Linear { inputs: width, outputs: 1 });
        Network::new_unstabilized(1, layers).unwrap()
    }

    /// Random parameters scaled so every pre-activation stays inside the
    /// interval for inputs in [-1, 1].
    fn probe_params(net: &Network, seed: u64) -> Parameters {
        let mut rng = Rng::new(seed);
        let mut params = Parameters::init(net, &mut rng, InitMode::UnitSpan).unwrap();
        // rescale first linear layer into [-2, 2] for x in [-1, 1]
        params.for_each_param_mut(&mut |kind, vals| {
            if kind == crate::network::ParamKind::LinearWeight {
                for v in vals {
                    *v = v.clamp(-0.9, 0.9);
                }
            }
        });
        // randomize the latent steps so the polynomial is not affine
        let mut r2 = Rng::new(seed ^ 0x9E37);
        params.for_each_param_mut(&mut |kind, vals| {
            if kind == crate::network::ParamKind::BernsteinRho {
                for v in vals {
                    *v = r2.uniform_range(-1.5, 1.5);
                }
            }
        });
        params
    }

    #[test]
    fn single_layer_degree_two() {
        let net = probe_net(2, 1, 3);
        let params = probe_params(&net, 42);
        let at2 = effective_degree_probe(&net, &params, (-1.0, 1.0), 2, 48).unwrap();
        let at1 = effective_degree_probe(&net, &params, (-1.0, 1.0), 1, 48).unwrap();
        assert!(at2 < 1e-10, "degree-2 residual {at2}");
        assert!(at1 > 1e-3, "degree-1 residual {at1}");
    }

    #[test]
    fn two_layers_square_the_degree() {
        let net = probe_net(2, 2, 3);
        let params = probe_params(&net, 7);
        let at4 = effective_degree_probe(&net, &params, (-1.0, 1.0), 4, 64).unwrap();
        assert!(at4 < 1e-8, "degree-4 residual {at4}");
    }

    #[test]
    fn identity_init_collapses_to_affine() {
        let net = probe_net(3, 2, 4);
        let mut rng = Rng::new(3);
        let mut params = Parameters::init(&net, &mut rng, InitMode::Identity).unwrap();
        params.for_each_param_mut(&mut |kind, vals| {
            if kind == crate::network::ParamKind::LinearWeight {
                for v in vals {
                    *v = v.clamp(-0.4, 0.4);
                }
            }
        });
        let at1 = effective_degree_probe(&net, &params, (-1.0, 1.0), 1, 48).unwrap();
        assert!(at1 < 1e-10, "affine residual {at1}");
    }

    #[test]
    fn range_violation_is_reported() {
        let net = probe_net(2, 1, 2);
        let mut rng = Rng::new(11);
        let mut params = Parameters::init(&net, &mut rng, InitMode::UnitSpan).unwrap();
        params.for_each_param_mut(&mut |kind, vals| {
            if kind == crate::network::ParamKind::LinearWeight {
                for v in vals {
                    *v = 100.0;
                }
            }
        });
        assert!(matches!(
            effective_degree_probe(&net, &params, (-1.0, 1.0), 2, 32),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn rejects_batch_norm_stacks() {
        let layers = vec![
            LayerSpec::Linear { inputs: 1, outputs: 2 },
            LayerSpec::batch_norm(2),
            LayerSpec::Linear { inputs: 2, outputs: 1 },
        ];
        let net = Network::new(1, layers).unwrap();
        let params = Parameters::init(&net, &mut Rng::new(1), InitMode::UnitSpan).unwrap();
        assert!(effective_degree_probe(&net, &params, (-1.0, 1.0), 2, 32).is_err());
    }
}
