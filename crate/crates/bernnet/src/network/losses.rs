//! Batch-mean losses and their logit gradients.

use crate::error::{Error, Result};
use crate::numcore::Matrix;

/// Target paired with the loss that scores it.
#[derive(Debug, Clone)]
pub enum LossTarget {
    /// Regression targets, mean squared error.
    Reals(Matrix),
    /// 0/1 targets in an N x 1 matrix, binary cross-entropy on logits.
    Binary(Matrix),
    /// Class labels, softmax cross-entropy.
    Labels(Vec<usize>),
}

impl LossTarget {
    pub fn rows(&self) -> usize {
        match self {
            LossTarget::Reals(m) | LossTarget::Binary(m) => m.rows(),
            LossTarget::Labels(l) => l.len(),
        }
    }

    /// Slice the targets down to the given row range.
    pub fn select(&self, indices: &[usize]) -> LossTarget {
        match self {
            LossTarget::Reals(m) => LossTarget::Reals(select_rows(m, indices)),
            LossTarget::Binary(m) => LossTarget::Binary(select_rows(m, indices)),
            LossTarget::Labels(l) => {
                LossTarget::Labels(indices.iter().map(|&i| l[i]).collect())
            }
        }
    }
}

fn select_rows(m: &Matrix, indices: &[usize]) -> Matrix {
    let mut out = Matrix::zeros(indices.len(), m.cols());
    for (r, &i) in indices.iter().enumerate() {
        out.row_mut(r).copy_from_slice(m.row(i));
    }
    out
}

/// Score network output against a target with the matching loss.
pub fn loss_for_target(output: &Matrix, target: &LossTarget) -> Result<(f64, Matrix)> {
    match target {
        LossTarget::Reals(t) => loss_mse(output, t),
        LossTarget::Binary(t) => loss_bce_logits(output, t),
        LossTarget::Labels(l) => loss_softmax_ce(output, l),
    }
}

/// Binary cross-entropy on logits; targets are 0/1 values in an N x 1
/// matrix. Uses the log-sum-exp-stable form
/// `max(z, 0) - z*y + ln(1 + e^-|z|)`.
pub fn loss_bce_logits(logits: &Matrix, targets: &Matrix) -> Result<(f64, Matrix)> {
    if logits.rows() != targets.rows() || logits.cols() != 1 || targets.cols() != 1 {
        return Err(Error::Shape("bce expects N x 1 logits and targets".into()));
    }
    let n = logits.rows() as f64;
    let mut loss = 0.0;
    let mut grad = Matrix::zeros(logits.rows(), 1);
    for r in 0..logits.rows() {
        let z = logits.get(r, 0);
        let y = targets.get(r, 0);
        if !(0.0..=1.0).contains(&y) {
            return Err(Error::Domain(format!("bce target {y} outside [0, 1]")));
        }
        loss += z.max(0.0) - z * y + (-z.abs()).exp().ln_1p();
        let p = if z >= 0.0 {
            1.0 / (1.0 + (-z).exp())
        } else {
            let e = z.exp();
            e / (1.0 + e)
        };
        grad.set(r, 0, (p - y) / n);
    }
    Ok((loss / n, grad))
}

/// Multiclass cross-entropy with integer labels; logits are N x C.
pub fn loss_softmax_ce(logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    if logits.rows() != labels.len() {
        return Err(Error::Shape("label count vs logit rows".into()));
    }
    let classes = logits.cols();
    let n = logits.rows() as f64;
    let mut loss = 0.0;
    let mut grad = Matrix::zeros(logits.rows(), classes);
    for r in 0..logits.rows() {
        let label = labels[r];
        if label >= classes {
            return Err(Error::Domain(format!(
                "label {label} out of range for {classes} classes"
            )));
        }
        let row = logits.row(r);
        let max = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let sum_exp: f64 = row.iter().map(|&v| (v - max).exp()).sum();
        let log_z = max + sum_exp.ln();
        loss += log_z - row[label];
        for c in 0..classes {
            let p = (row[c] - log_z).exp();
            let indicator = if c == label { 1.0 } else { 0.0 };
            grad.set(r, c, (p - indicator) / n);
        }
    }
    Ok((loss / n, grad))
}

/// Mean squared error over every entry of the prediction matrix.
pub fn loss_mse(pred: &Matrix, targets: &Matrix) -> Result<(f64, Matrix)> {
    if pred.rows() != targets.rows() || pred.cols() != targets.cols() {
        return Err(Error::Shape("mse shape mismatch".into()));
    }
    let count = (pred.rows() * pred.cols()) as f64;
    let mut loss = 0.0;
    let mut grad = Matrix::zeros(pred.rows(), pred.cols());
    for r in 0..pred.rows() {
        for c in 0..pred.cols() {
            let d = pred.get(r, c) - targets.get(r, c);
            loss += d * d;
            grad.set(r, c, 2.0 * d / count);
        }
    }
    Ok((loss / count, grad))
}
