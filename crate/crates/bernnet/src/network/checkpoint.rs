//! Versioned checkpoint format: a JSON header describing the architecture
//! followed by every parameter (including BatchNorm running statistics) as
//! hex-encoded IEEE-754 bits, one value per line. Round-trips bit-exactly.

use super::params::{LayerParams, Parameters};
use super::Network;
use crate::error::{Error, Result};
use crate::numcore::Matrix;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

const MAGIC: &str = "bernnet-checkpoint v1";

fn collect_values(layers: &[LayerParams], out: &mut Vec<f64>) {
    for l in layers {
        match l {
            LayerParams::Linear { weights, bias } => {
                out.extend_from_slice(weights.data());
                out.extend_from_slice(bias);
            }
            LayerParams::BatchNorm { gamma, beta, running_mean, running_var } => {
                out.extend_from_slice(gamma);
                out.extend_from_slice(beta);
                out.extend_from_slice(running_mean);
                out.extend_from_slice(running_var);
            }
            LayerParams::Bernstein { coeffs } => {
                for cc in coeffs {
                    out.push(cc.c0);
                    out.extend_from_slice(&cc.rho);
                }
            }
            LayerParams::None => {}
            LayerParams::Residual { inner } => collect_values(inner, out),
        }
    }
}

fn take<'a>(values: &'a [f64], pos: &mut usize, len: usize) -> Result<&'a [f64]> {
    let s = values
        .get(*pos..*pos + len)
        .ok_or_else(|| Error::Data("checkpoint truncated".into()))?;
    *pos += len;
    Ok(s)
}

fn fill_values(layers: &mut [LayerParams], values: &[f64], pos: &mut usize) -> Result<()> {
    for l in layers {
        match l {
            LayerParams::Linear { weights, bias } => {
                let w = take(values, pos, weights.data().len())?.to_vec();
                *weights = Matrix::from_vec(weights.rows(), weights.cols(), w)?;
                let b = take(values, pos, bias.len())?;
                bias.copy_from_slice(b);
            }
            LayerParams::BatchNorm { gamma, beta, running_mean, running_var } => {
                let g = take(values, pos, gamma.len())?;
                gamma.copy_from_slice(g);
                let b = take(values, pos, beta.len())?;
                beta.copy_from_slice(b);
                let rm = take(values, pos, running_mean.len())?;
                running_mean.copy_from_slice(rm);
                let rv = take(values, pos, running_var.len())?;
                running_var.copy_from_slice(rv);
            }
            LayerParams::Bernstein { coeffs } => {
                for cc in coeffs {
                    cc.c0 = take(values, pos, 1)?[0];
                    let r = take(values, pos, cc.rho.len())?.to_vec();
                    cc.rho = r;
                }
            }
            LayerParams::None => {}
            LayerParams::Residual { inner } => fill_values(inner, values, pos)?,
        }
    }
    Ok(())
}

pub fn save_checkpoint(net: &Network, params: &Parameters, path: &Path) -> Result<()> {
    let mut values = Vec::new();
    collect_values(params.layers(), &mut values);
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "{MAGIC}")?;
    writeln!(f, "{}", serde_json::to_string(net).map_err(|e| Error::Data(e.to_string()))?)?;
    writeln!(f, "{}", values.len())?;
    for v in values {
        writeln!(f, "{:016x}", v.to_bits())?;
    }
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(Network, Parameters)> {
    let f = BufReader::new(std::fs::File::open(path)?);
    let mut lines = f.lines();
    let mut next = || -> Result<String> {
        lines
            .next()
            .transpose()?
            .ok_or_else(|| Error::Data("checkpoint truncated".into()))
    };
    let magic = next()?;
    if magic != MAGIC {
        return Err(Error::Data(format!("bad checkpoint header: {magic:?}")));
    }
    let net: Network =
        serde_json::from_str(&next()?).map_err(|e| Error::Data(format!("architecture: {e}")))?;
    // re-validate the deserialized structure
    let net = Network::new_unstabilized(net.input_width(), net.layers().to_vec())?;
    let count: usize = next()?
        .trim()
        .parse()
        .map_err(|_| Error::Data("bad value count".into()))?;
    let mut values = Vec::with_capacity(count);
    for _ in 0..count {
        let line = next()?;
        let bits = u64::from_str_radix(line.trim(), 16)
            .map_err(|_| Error::Data(format!("bad value line: {line:?}")))?;
        values.push(f64::from_bits(bits));
    }
    // shape a parameter tree, then overwrite with stored values
    let mut params = Parameters::init(
        &net,
        &mut crate::numcore::Rng::new(0),
        crate::bernstein::InitMode::UnitSpan,
    )?;
    let mut pos = 0;
    fill_values(&mut params.layers, &values, &mut pos)?;
    if pos != values.len() {
        return Err(Error::Data("checkpoint value count mismatch".into()));
    }
    Ok((net, params))
}
