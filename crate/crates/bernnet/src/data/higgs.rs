//! HIGGS-format CSV: label (0/1) followed by 28 real features, comma
//! separated, no header. Scientific notation is accepted; missing or
//! non-numeric fields are rejected rather than imputed.

use super::Dataset;
use crate::error::{Error, Result};
use crate::network::LossTarget;
use crate::numcore::Matrix;
use flate2::read::GzDecoder;
use std::io::{BufReader, Read};
use std::path::Path;

pub const HIGGS_FEATURES: usize = 28;

/// Read up to `max_rows` rows (file order) of raw, unnormalized features.
pub fn load_higgs_csv(path: &Path, max_rows: Option<usize>) -> Result<Dataset> {
    let f = std::fs::File::open(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let mut reader = BufReader::new(f);
    let mut sig = [0u8; 2];
    let n = reader.read(&mut sig)?;
    let f = std::fs::File::open(path)?;
    let inner: Box<dyn Read> = if n == 2 && sig == [0x1f, 0x8b] {
        Box::new(GzDecoder::new(BufReader::new(f)))
    } else {
        Box::new(BufReader::new(f))
    };
    let mut csv_reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(inner);

    let cap = max_rows.unwrap_or(usize::MAX);
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (i, record) in csv_reader.records().enumerate() {
        if labels.len() >= cap {
            break;
        }
        let record = record.map_err(|e| Error::Data(format!("row {i}: {e}")))?;
        if record.len() != HIGGS_FEATURES + 1 {
            return Err(Error::Data(format!(
                "row {i}: {} columns, expected {}",
                record.len(),
                HIGGS_FEATURES + 1
            )));
        }
        let mut values = record.iter().enumerate().map(|(j, s)| {
            s.parse::<f64>()
                .map_err(|_| Error::Data(format!("row {i} column {j}: non-numeric {s:?}")))
        });
        let label = values.next().unwrap()?;
        if label != 0.0 && label != 1.0 {
            return Err(Error::Data(format!("row {i}: label {label} not 0/1")));
        }
        labels.push(label);
        for v in values {
            features.push(v?);
        }
    }
    let rows = labels.len();
    Ok(Dataset {
        features: Matrix::from_vec(rows, HIGGS_FEATURES, features)?,
        targets: LossTarget::Binary(Matrix::from_vec(rows, 1, labels)?),
        label: "higgs".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{split, Normalizer};

    fn write_fixture(rows: &[(f64, [f64; HIGGS_FEATURES])]) -> tempfile::NamedTempFile {
        use std::io::Write;
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for (label, feats) in rows {
            let cols: Vec<String> = std::iter::once(format!("{label}"))
                .chain(feats.iter().map(|v| format!("{v:e}")))
                .collect();
            writeln!(f, "{}", cols.join(",")).unwrap();
        }
        f.flush().unwrap();
        f
    }

    #[test]
    fn five_row_fixture_exact() {
        let mut rows = Vec::new();
        for i in 0..5 {
            let mut feats = [0.0; HIGGS_FEATURES];
            for (j, v) in feats.iter_mut().enumerate() {
                *v = (i * HIGGS_FEATURES + j) as f64 * 0.25 - 3.0;
            }
            rows.push(((i % 2) as f64, feats));
        }
        let f = write_fixture(&rows);
        let d = load_higgs_csv(f.path(), None).unwrap();
        assert_eq!(d.len(), 5);
        for (i, (label, feats)) in rows.iter().enumerate() {
            assert_eq!(d.features.row(i), feats.as_slice());
            match &d.targets {
                LossTarget::Binary(t) => assert_eq!(t.get(i, 0), *label),
                _ => panic!(),
            }
        }
    }

    #[test]
    fn max_rows_takes_file_prefix() {
        let rows: Vec<(f64, [f64; HIGGS_FEATURES])> = (0..50)
            .map(|i| {
                let mut f = [0.0; HIGGS_FEATURES];
                f[0] = i as f64;
                ((i % 2) as f64, f)
            })
            .collect();
        let f = write_fixture(&rows);
        let d = load_higgs_csv(f.path(), Some(10)).unwrap();
        assert_eq!(d.len(), 10);
        for i in 0..10 {
            assert_eq!(d.features.get(i, 0), i as f64);
        }
    }

    #[test]
    fn wrong_column_count_rejected() {
        use std::io::Write;
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "1.0,2.0,3.0").unwrap();
        f.flush().unwrap();
        assert!(load_higgs_csv(f.path(), None).is_err());
    }

    #[test]
    fn non_numeric_field_rejected() {
        use std::io::Write;
        let mut f = tempfile::NamedTempFile::new().unwrap();
        let cols: Vec<String> = std::iter::once("1".to_string())
            .chain((0..HIGGS_FEATURES).map(|j| {
                if j == 5 {
                    "oops".to_string()
                } else {
                    "0.5".to_string()
                }
            }))
            .collect();
        writeln!(f, "{}", cols.join(",")).unwrap();
        f.flush().unwrap();
        let err = load_higgs_csv(f.path(), None).unwrap_err();
        assert!(err.to_string().contains("column 6"), "{err}");
    }

    #[test]
    fn train_split_statistics_normalize_exactly() {
        let mut rng = crate::numcore::Rng::new(31);
        let rows: Vec<(f64, [f64; HIGGS_FEATURES])> = (0..200)
            .map(|i| {
                let mut f = [0.0; HIGGS_FEATURES];
                for v in f.iter_mut() {
                    *v = rng.uniform_range(-4.0, 7.0);
                }
                ((i % 2) as f64, f)
            })
            .collect();
        let file = write_fixture(&rows);
        let d = load_higgs_csv(file.path(), None).unwrap();
        let (train, valid) = split(&d, 0.8, 3).unwrap();
        let norm = Normalizer::fit(&train.features, 1e-12);
        let z = norm.apply(&train.features).unwrap();
        // recompute statistics independently
        for j in 0..HIGGS_FEATURES {
            let mut mean = 0.0;
            for r in 0..z.rows() {
                mean += z.get(r, j);
            }
            mean /= z.rows() as f64;
            assert!(mean.abs() < 1e-10, "feature {j} mean {mean}");
            let mut var = 0.0;
            for r in 0..z.rows() {
                var += (z.get(r, j) - mean) * (z.get(r, j) - mean);
            }
            var /= z.rows() as f64;
            assert!((var - 1.0).abs() < 1e-8, "feature {j} var {var}");
        }
        // validation normalized with train stats is generally not exactly
        // standard; statistics must not leak
        let zv = norm.apply(&valid.features).unwrap();
        let off = zv.col_means().iter().map(|m| m.abs()).fold(0.0, f64::max);
        assert!(off > 1e-12, "validation means suspiciously exact");
    }
}
