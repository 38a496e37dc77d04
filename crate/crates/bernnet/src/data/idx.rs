//! IDX file parsing (the MNIST container format): big-endian magic
//! 0x00000803 for images, 0x00000801 for labels, dimension headers, then
//! raw bytes. Transparently gunzips files with the gzip signature.

use super::Dataset;
use crate::error::{Error, Result};
use crate::network::LossTarget;
use crate::numcore::Matrix;
use flate2::read::GzDecoder;
use std::io::{BufReader, Read, Write};
use std::path::Path;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

fn open_maybe_gz(path: &Path) -> Result<Box<dyn Read>> {
    let f = std::fs::File::open(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let mut reader = BufReader::new(f);
    let mut sig = [0u8; 2];
    let n = reader.read(&mut sig)?;
    // restart the stream: reopen rather than seek so gz readers stay simple
    let f = std::fs::File::open(path)?;
    let reader2 = BufReader::new(f);
    if n == 2 && sig == [0x1f, 0x8b] {
        Ok(Box::new(GzDecoder::new(reader2)))
    } else {
        Ok(Box::new(reader2))
    }
}

fn read_u32_be(r: &mut dyn Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)
        .map_err(|_| Error::Data("truncated IDX header".into()))?;
    Ok(u32::from_be_bytes(buf))
}

/// Parse paired image/label IDX files into a flattened dataset with
/// pixels scaled to [0, 1].
pub fn load_mnist(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let mut ir = open_maybe_gz(images_path)?;
    let magic = read_u32_be(&mut ir)?;
    if magic != IMAGES_MAGIC {
        return Err(Error::Data(format!(
            "bad image magic {magic:#010x}, expected {IMAGES_MAGIC:#010x}"
        )));
    }
    let count = read_u32_be(&mut ir)? as usize;
    let rows = read_u32_be(&mut ir)? as usize;
    let cols = read_u32_be(&mut ir)? as usize;
    let pixels = count
        .checked_mul(rows * cols)
        .ok_or_else(|| Error::Data("image dimensions overflow".into()))?;
    let mut raw = vec![0u8; pixels];
    ir.read_exact(&mut raw)
        .map_err(|_| Error::Data("truncated image data".into()))?;

    let mut lr = open_maybe_gz(labels_path)?;
    let magic = read_u32_be(&mut lr)?;
    if magic != LABELS_MAGIC {
        return Err(Error::Data(format!(
            "bad label magic {magic:#010x}, expected {LABELS_MAGIC:#010x}"
        )));
    }
    let label_count = read_u32_be(&mut lr)? as usize;
    if label_count != count {
        return Err(Error::Data(format!(
            "{count} images vs {label_count} labels"
        )));
    }
    let mut labels_raw = vec![0u8; label_count];
    lr.read_exact(&mut labels_raw)
        .map_err(|_| Error::Data("truncated label data".into()))?;
    let mut labels = Vec::with_capacity(label_count);
    for (i, &l) in labels_raw.iter().enumerate() {
        if l > 9 {
            return Err(Error::Data(format!("label {l} > 9 at index {i}")));
        }
        labels.push(l as usize);
    }

    let data: Vec<f64> = raw.into_iter().map(|b| b as f64 / 255.0).collect();
    let features = Matrix::from_vec(count, rows * cols, data)?;
    Ok(Dataset {
        features,
        targets: LossTarget::Labels(labels),
        label: "mnist".into(),
    })
}

/// Write an image IDX file (u8 pixels); used by fixtures and tests.
pub fn write_idx_images(path: &Path, images: &[Vec<u8>], rows: usize, cols: usize) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(&IMAGES_MAGIC.to_be_bytes())?;
    f.write_all(&(images.len() as u32).to_be_bytes())?;
    f.write_all(&(rows as u32).to_be_bytes())?;
    f.write_all(&(cols as u32).to_be_bytes())?;
    for img in images {
        if img.len() != rows * cols {
            return Err(Error::Shape("image size vs header".into()));
        }
        f.write_all(img)?;
    }
    Ok(())
}

/// Write a label IDX file.
pub fn write_idx_labels(path: &Path, labels: &[u8]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(&LABELS_MAGIC.to_be_bytes())?;
    f.write_all(&(labels.len() as u32).to_be_bytes())?;
    f.write_all(labels)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_zero_image_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let ip = dir.path().join("img");
        let lp = dir.path().join("lbl");
        write_idx_images(&ip, &[vec![0u8; 4]], 2, 2).unwrap();
        write_idx_labels(&lp, &[7]).unwrap();
        let d = load_mnist(&ip, &lp).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.features.row(0), &[0.0; 4]);
        match &d.targets {
            LossTarget::Labels(l) => assert_eq!(l, &vec![7]),
            _ => panic!("label targets expected"),
        }
    }

    #[test]
    fn corrupted_magic_names_value() {
        let dir = tempfile::tempdir().unwrap();
        let ip = dir.path().join("img");
        let lp = dir.path().join("lbl");
        std::fs::write(&ip, 0xdeadbeefu32.to_be_bytes()).unwrap();
        write_idx_labels(&lp, &[1]).unwrap();
        let err = load_mnist(&ip, &lp).unwrap_err();
        assert!(err.to_string().contains("0xdeadbeef"), "{err}");
    }

    #[test]
    fn rejects_label_above_nine() {
        let dir = tempfile::tempdir().unwrap();
        let ip = dir.path().join("img");
        let lp = dir.path().join("lbl");
        write_idx_images(&ip, &[vec![1u8; 4]], 2, 2).unwrap();
        write_idx_labels(&lp, &[12]).unwrap();
        assert!(load_mnist(&ip, &lp).is_err());
    }

    #[test]
    fn gzip_transparent() {
        let dir = tempfile::tempdir().unwrap();
        let ip = dir.path().join("img.gz");
        let lp = dir.path().join("lbl");
        // gzip an images payload by hand
        let mut payload = Vec::new();
        payload.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
        payload.extend_from_slice(&1u32.to_be_bytes());
        payload.extend_from_slice(&1u32.to_be_bytes());
        payload.extend_from_slice(&3u32.to_be_bytes());
        payload.extend_from_slice(&[10, 20, 255]);
        let f = std::fs::File::create(&ip).unwrap();
        let mut enc = flate2::write::GzEncoder::new(f, flate2::Compression::default());
        enc.write_all(&payload).unwrap();
        enc.finish().unwrap();
        write_idx_labels(&lp, &[3]).unwrap();
        let d = load_mnist(&ip, &lp).unwrap();
        assert_eq!(d.features.get(0, 2), 1.0);
        assert!((d.features.get(0, 0) - 10.0 / 255.0).abs() < 1e-15);
    }

    #[test]
    fn truncated_file_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let ip = dir.path().join("img");
        let lp = dir.path().join("lbl");
        let mut payload = Vec::new();
        payload.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
        payload.extend_from_slice(&5u32.to_be_bytes()); // claims 5 images
        payload.extend_from_slice(&2u32.to_be_bytes());
        payload.extend_from_slice(&2u32.to_be_bytes());
        payload.extend_from_slice(&[1, 2, 3]); // far too short
        std::fs::write(&ip, payload).unwrap();
        write_idx_labels(&lp, &[0; 5]).unwrap();
        assert!(load_mnist(&ip, &lp).is_err());
    }
}
