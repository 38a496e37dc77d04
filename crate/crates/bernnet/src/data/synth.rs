//! Synthetic regression targets for the approximation sweeps, plus the
//! modulus-of-continuity estimator.

use super::Dataset;
use crate::error::{Error, Result};
use crate::network::LossTarget;
use crate::numcore::{Matrix, Rng};
use serde::{Deserialize, Serialize};

/// Scalar-input target functions; `Fourier` emits two components
/// (sin, cos) to exercise the vector-valued error path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TargetFn {
    /// x -> sin(2 pi k x)
    Sin { cycles: u32 },
    /// x -> x
    Identity,
    /// x -> (sin(2 pi k x), cos(2 pi k x))
    Fourier { cycles: u32 },
}

impl TargetFn {
    pub fn outputs(&self) -> usize {
        match self {
            TargetFn::Fourier { .. } => 2,
            _ => 1,
        }
    }

    pub fn eval(&self, x: f64) -> Vec<f64> {
        match self {
            TargetFn::Sin { cycles } => {
                vec![(2.0 * std::f64::consts::PI * *cycles as f64 * x).sin()]
            }
            TargetFn::Identity => vec![x],
            TargetFn::Fourier { cycles } => {
                let t = 2.0 * std::f64::consts::PI * *cycles as f64 * x;
                vec![t.sin(), t.cos()]
            }
        }
    }

    pub fn name(&self) -> String {
        match self {
            TargetFn::Sin { cycles } => format!("sin_{cycles}"),
            TargetFn::Identity => "identity".into(),
            TargetFn::Fourier { cycles } => format!("fourier_{cycles}"),
        }
    }

    /// Parse ids like "sin_4", "identity", "fourier_2".
    pub fn parse(s: &str) -> Result<TargetFn> {
        if s == "identity" {
            return Ok(TargetFn::Identity);
        }
        if let Some(k) = s.strip_prefix("sin_") {
            let cycles = k
                .parse()
                .map_err(|_| Error::Config(format!("bad target id {s:?}")))?;
            return Ok(TargetFn::Sin { cycles });
        }
        if let Some(k) = s.strip_prefix("fourier_") {
            let cycles = k
                .parse()
                .map_err(|_| Error::Config(format!("bad target id {s:?}")))?;
            return Ok(TargetFn::Fourier { cycles });
        }
        Err(Error::Config(format!("unknown target id {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    Grid,
    UniformRandom,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTarget {
    pub function: TargetFn,
    pub domain: (f64, f64),
    pub samples: usize,
    #[serde(default)]
    pub noise: f64,
    #[serde(default = "default_sampling")]
    pub sampling: SamplingMode,
}

fn default_sampling() -> SamplingMode {
    SamplingMode::Grid
}

/// Sample (x, f(x)) pairs; noise (if any) is additive Gaussian on y.
pub fn synth_regression(target: &SyntheticTarget, seed: u64) -> Result<Dataset> {
    let (a, b) = target.domain;
    if !(b > a) || target.samples < 2 {
        return Err(Error::Config("degenerate synthetic domain".into()));
    }
    let mut rng = Rng::new(seed).derive(0x517E);
    let xs: Vec<f64> = match target.sampling {
        SamplingMode::Grid => (0..target.samples)
            .map(|i| a + (b - a) * i as f64 / (target.samples - 1) as f64)
            .collect(),
        SamplingMode::UniformRandom => {
            (0..target.samples).map(|_| rng.uniform_range(a, b)).collect()
        }
    };
    let outputs = target.function.outputs();
    let mut y = Matrix::zeros(xs.len(), outputs);
    for (r, &x) in xs.iter().enumerate() {
        let v = target.function.eval(x);
        for (c, val) in v.into_iter().enumerate() {
            let noisy = if target.noise > 0.0 {
                val + rng.normal(0.0, target.noise)
            } else {
                val
            };
            y.set(r, c, noisy);
        }
    }
    Ok(Dataset {
        features: Matrix::from_vec(xs.len(), 1, xs)?,
        targets: LossTarget::Reals(y),
        label: target.function.name(),
    })
}

/// Brute-force modulus of continuity over sample pairs: the largest
/// |f(x) - f(y)| over pairs with |x - y| <= delta. For vector-valued
/// samples the max-norm over components is used.
pub fn modulus_estimate(xs: &[f64], ys: &Matrix, delta: f64) -> Result<f64> {
    if xs.len() != ys.rows() || xs.len() < 2 {
        return Err(Error::Shape("modulus needs >= 2 aligned samples".into()));
    }
    if !(delta > 0.0) {
        return Err(Error::Domain("delta must be positive".into()));
    }
    let mut sup: f64 = 0.0;
    for i in 0..xs.len() {
        for j in i + 1..xs.len() {
            if (xs[i] - xs[j]).abs() <= delta {
                for c in 0..ys.cols() {
                    sup = sup.max((ys.get(i, c) - ys.get(j, c)).abs());
                }
            }
        }
    }
    Ok(sup)
}
