//! Small dense solvers used by the polynomial-degree probe.

use super::Matrix;
use crate::error::{Error, Result};

/// Solve `A x = b` for square `A` by Gaussian elimination with partial
/// pivoting. `A` and `b` are consumed as copies; fine at probe sizes.
pub fn solve(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.rows();
    if a.cols() != n || b.len() != n {
        return Err(Error::Shape("solve expects square system".into()));
    }
    let mut m = a.clone();
    let mut rhs = b.to_vec();
    for col in 0..n {
        let mut pivot = col;
        for r in col + 1..n {
            if m.get(r, col).abs() > m.get(pivot, col).abs() {
                pivot = r;
            }
        }
        if m.get(pivot, col).abs() < 1e-300 {
            return Err(Error::Domain("singular system".into()));
        }
        if pivot != col {
            for c in 0..n {
                let tmp = m.get(col, c);
                m.set(col, c, m.get(pivot, c));
                m.set(pivot, c, tmp);
            }
            rhs.swap(col, pivot);
        }
        let d = m.get(col, col);
        for r in col + 1..n {
            let f = m.get(r, col) / d;
            if f == 0.0 {
                continue;
            }
            for c in col..n {
                let v = m.get(r, c) - f * m.get(col, c);
                m.set(r, c, v);
            }
            rhs[r] -= f * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let mut acc = rhs[r];
        for c in r + 1..n {
            acc -= m.get(r, c) * x[c];
        }
        x[r] = acc / m.get(r, r);
    }
    Ok(x)
}

/// Chebyshev polynomial values T_0..T_degree at `t` in [-1, 1].
fn chebyshev_row(degree: usize, t: f64, out: &mut Vec<f64>) {
    out.clear();
    out.push(1.0);
    if degree >= 1 {
        out.push(t);
    }
    for k in 2..=degree {
        let v = 2.0 * t * out[k - 1] - out[k - 2];
        out.push(v);
    }
}

/// Least-squares fit of a univariate polynomial of the given degree to the
/// samples `(xs, ys)`, returning the maximum absolute residual over the
/// samples. The fit uses the Chebyshev basis on the sample hull for
/// conditioning; sampling on Chebyshev nodes keeps the normal equations
/// near-orthogonal up to degree ~30.
pub fn polyfit_max_residual(xs: &[f64], ys: &[f64], degree: usize) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() <= degree {
        return Err(Error::Shape(format!(
            "polyfit: {} samples for degree {}",
            xs.len(),
            degree
        )));
    }
    let (lo, hi) = xs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| {
            (a.min(x), b.max(x))
        });
    if hi <= lo {
        return Err(Error::Domain("degenerate sample span".into()));
    }
    let m = degree + 1;
    let mut design = Matrix::zeros(xs.len(), m);
    let mut row = Vec::with_capacity(m);
    for (i, &x) in xs.iter().enumerate() {
        let t = 2.0 * (x - lo) / (hi - lo) - 1.0;
        chebyshev_row(degree, t, &mut row);
        design.row_mut(i).copy_from_slice(&row);
    }
    // normal equations: (D^T D) c = D^T y
    let dt = design.transpose();
    let gram = dt.matmul(&design)?;
    let y = Matrix::from_vec(ys.len(), 1, ys.to_vec())?;
    let rhs_m = dt.matmul(&y)?;
    let coeffs = solve(&gram, rhs_m.data())?;
    let mut max_res: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let t = 2.0 * (x - lo) / (hi - lo) - 1.0;
        chebyshev_row(degree, t, &mut row);
        let fit: f64 = row.iter().zip(&coeffs).map(|(b, c)| b * c).sum();
        max_res = max_res.max((fit - ys[i]).abs());
    }
    Ok(max_res)
}

/// Chebyshev nodes of the second kind on [lo, hi], endpoints included.
pub fn chebyshev_nodes(count: usize, lo: f64, hi: f64) -> Vec<f64> {
    assert!(count >= 2);
    (0..count)
        .map(|i| {
            let theta = std::f64::consts::PI * i as f64 / (count - 1) as f64;
            let t = -theta.cos();
            lo + (hi - lo) * 0.5 * (t + 1.0)
        })
        .collect()
}
