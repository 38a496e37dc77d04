//! Dataset ingestion, normalization, splits, and batching.

mod higgs;
mod idx;
mod synth;

pub use higgs::load_higgs_csv;
pub use idx::{load_mnist, write_idx_images, write_idx_labels};
pub use synth::{modulus_estimate, synth_regression, SamplingMode, SyntheticTarget, TargetFn};

use crate::error::{Error, Result};
use crate::network::LossTarget;
use crate::numcore::{Matrix, Rng};

/// Feature matrix plus targets; rows are samples.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub features: Matrix,
    pub targets: LossTarget,
    pub label: String,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<()> {
        if self.targets.rows() != self.features.rows() {
            return Err(Error::Shape(format!(
                "{} feature rows vs {} targets",
                self.features.rows(),
                self.targets.rows()
            )));
        }
        Ok(())
    }

    pub fn select(&self, indices: &[usize], label: &str) -> Dataset {
        let mut features = Matrix::zeros(indices.len(), self.features.cols());
        for (r, &i) in indices.iter().enumerate() {
            features.row_mut(r).copy_from_slice(self.features.row(i));
        }
        Dataset {
            features,
            targets: self.targets.select(indices),
            label: label.to_string(),
        }
    }

    /// First `n` rows in file order.
    pub fn head(&self, n: usize) -> Dataset {
        let indices: Vec<usize> = (0..n.min(self.len())).collect();
        self.select(&indices, &self.label)
    }
}

/// Per-feature z-score statistics, fit on the training split only.
#[derive(Debug, Clone)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    /// Variance floor guards constant features (e.g. blank image borders).
    pub fn fit(features: &Matrix, var_floor: f64) -> Normalizer {
        let n = features.rows() as f64;
        let mean = features.col_means();
        let mut var = vec![0.0; features.cols()];
        for r in 0..features.rows() {
            let row = features.row(r);
            for (j, v) in row.iter().enumerate() {
                let c = v - mean[j];
                var[j] += c * c;
            }
        }
        let std = var
            .into_iter()
            .map(|v| (v / n).max(var_floor).sqrt())
            .collect();
        Normalizer { mean, std }
    }

    pub fn apply(&self, features: &Matrix) -> Result<Matrix> {
        if features.cols() != self.mean.len() {
            return Err(Error::Shape("normalizer width mismatch".into()));
        }
        let mut out = features.clone();
        for r in 0..out.rows() {
            let row = out.row_mut(r);
            for j in 0..row.len() {
                row[j] = (row[j] - self.mean[j]) / self.std[j];
            }
        }
        Ok(out)
    }
}

/// Write a clearly-synthetic MNIST stand-in (IDX files with the standard
/// names) into `dir`: ten noisy class prototypes over 28x28 images. Meant
/// for desk-scale runs and tests where the real files are unavailable;
/// the gradient-health experiments measure structural properties that do
/// not depend on the source images.
pub fn write_synthetic_mnist(
    dir: &std::path::Path,
    train_rows: usize,
    test_rows: usize,
    seed: u64,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut rng = Rng::new(seed).derive(0x1D9);
    let side = 28;
    let pixels = side * side;
    let prototypes: Vec<Vec<f64>> = (0..10)
        .map(|_| (0..pixels).map(|_| rng.uniform()).collect())
        .collect();
    let mut make = |rows: usize| -> (Vec<Vec<u8>>, Vec<u8>) {
        let mut images = Vec::with_capacity(rows);
        let mut labels = Vec::with_capacity(rows);
        for i in 0..rows {
            let class = (i % 10) as u8;
            let img: Vec<u8> = prototypes[class as usize]
                .iter()
                .map(|&p| {
                    let v = (p + rng.normal(0.0, 0.25)).clamp(0.0, 1.0);
                    (v * 255.0).round() as u8
                })
                .collect();
            images.push(img);
            labels.push(class);
        }
        (images, labels)
    };
    let (train_imgs, train_labels) = make(train_rows);
    let (test_imgs, test_labels) = make(test_rows);
    write_idx_images(&dir.join("train-images-idx3-ubyte"), &train_imgs, side, side)?;
    write_idx_labels(&dir.join("train-labels-idx1-ubyte"), &train_labels)?;
    write_idx_images(&dir.join("t10k-images-idx3-ubyte"), &test_imgs, side, side)?;
    write_idx_labels(&dir.join("t10k-labels-idx1-ubyte"), &test_labels)?;
    Ok(())
}

/// Deterministic shuffled split into (train, validation).
pub fn split(dataset: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!("split fraction {fraction} outside (0, 1)")));
    }
    let mut indices: Vec<usize> = (0..dataset.len()).collect();
    Rng::new(seed).derive(0x5B17).shuffle(&mut indices);
    let cut = (dataset.len() as f64 * fraction).round() as usize;
    let train = dataset.select(&indices[..cut], &format!("{}-train", dataset.label));
    let valid = dataset.select(&indices[cut..], &format!("{}-valid", dataset.label));
    Ok((train, valid))
}

/// Epoch iterator over shuffled mini-batch index slices. Every sample
/// appears exactly once per epoch; the last batch may be short. The
/// shuffle is a pure function of (seed, epoch).
pub struct BatchIterator {
    order: Vec<usize>,
    batch_size: usize,
    cursor: usize,
}

impl BatchIterator {
    pub fn new(len: usize, batch_size: usize, seed: u64, epoch: u32) -> Self {
        assert!(batch_size > 0);
        let mut order: Vec<usize> = (0..len).collect();
        Rng::new(seed).derive(0xBA7C_0000 + epoch as u64).shuffle(&mut order);
        BatchIterator {
            order,
            batch_size,
            cursor: 0,
        }
    }
}

impl Iterator for BatchIterator {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.cursor >= self.order.len() {
            return None;
        }
        let end = (self.cursor + self.batch_size).min(self.order.len());
        let batch = self.order[self.cursor..end].to_vec();
        self.cursor = end;
        Some(batch)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize) -> Dataset {
        let features =
            Matrix::from_vec(n, 2, (0..2 * n).map(|i| i as f64).collect()).unwrap();
        Dataset {
            features,
            targets: LossTarget::Labels((0..n).map(|i| i % 2).collect()),
            label: "toy".into(),
        }
    }

    #[test]
    fn split_fraction_and_partition() {
        let d = toy(10);
        let (tr, va) = split(&d, 0.8, 7).unwrap();
        assert_eq!(tr.len(), 8);
        assert_eq!(va.len(), 2);
        // union is the full set, intersection empty: recover row ids from col 0
        let mut ids: Vec<i64> = tr
            .features
            .data()
            .chunks(2)
            .chain(va.features.data().chunks(2))
            .map(|c| (c[0] / 2.0) as i64)
            .collect();
        ids.sort_unstable();
        assert_eq!(ids, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn same_seed_same_split() {
        let d = toy(50);
        let (a, _) = split(&d, 0.8, 42).unwrap();
        let (b, _) = split(&d, 0.8, 42).unwrap();
        assert_eq!(a.features, b.features);
    }

    #[test]
    fn batches_cover_every_sample_once() {
        let seen: Vec<usize> = BatchIterator::new(103, 16, 1, 3).flatten().collect();
        assert_eq!(seen.len(), 103);
        let mut sorted = seen.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..103).collect::<Vec<_>>());
        // short last batch
        let sizes: Vec<usize> = BatchIterator::new(103, 16, 1, 3).map(|b| b.len()).collect();
        assert_eq!(*sizes.last().unwrap(), 103 % 16);
    }

    #[test]
    fn batch_order_fixed_by_seed_and_epoch() {
        let a: Vec<_> = BatchIterator::new(40, 8, 9, 2).collect();
        let b: Vec<_> = BatchIterator::new(40, 8, 9, 2).collect();
        let c: Vec<_> = BatchIterator::new(40, 8, 9, 3).collect();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn normalizer_zero_mean_unit_var() {
        let mut rng = Rng::new(5);
        let x = rng.normal_matrix(500, 3, 4.0, 2.5);
        let norm = Normalizer::fit(&x, 1e-8);
        let z = norm.apply(&x).unwrap();
        for m in z.col_means() {
            assert!(m.abs() < 1e-10, "mean {m}");
        }
        for j in 0..3 {
            let mut v = 0.0;
            for r in 0..500 {
                v += z.get(r, j) * z.get(r, j);
            }
            v /= 500.0;
            assert!((v - 1.0).abs() < 1e-8, "var {v}");
        }
    }

    #[test]
    fn normalizer_handles_constant_feature() {
        let x = Matrix::from_vec(4, 1, vec![2.0; 4]).unwrap();
        let norm = Normalizer::fit(&x, 1e-8);
        let z = norm.apply(&x).unwrap();
        assert!(z.data().iter().all(|v| v.is_finite() && *v == 0.0));
    }
}
