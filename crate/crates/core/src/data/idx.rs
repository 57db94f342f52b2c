//! IDX file reading and writing.
//!
//! Layout (big-endian): image files carry magic 0x00000803, then item
//! count, rows, cols as u32, then unsigned pixel bytes; label files
//! carry magic 0x00000801, then item count, then unsigned label bytes.
//! Files ending in `.gz` are decompressed first.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;

use crate::error::{Error, Result};
use crate::numeric::Matrix;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

fn parse_err(path: &Path, offset: u64, reason: impl Into<String>) -> Error {
    Error::IdxParse {
        path: path.display().to_string(),
        offset,
        reason: reason.into(),
    }
}

/// Reads the whole file, decompressing when the name ends in `.gz`.
fn read_all(path: &Path) -> Result<Vec<u8>> {
    let mut raw = Vec::new();
    File::open(path)?.read_to_end(&mut raw)?;
    if path.extension().is_some_and(|e| e == "gz") {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| parse_err(path, 0, format!("gzip decode failed: {e}")))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn take_u32(bytes: &[u8], offset: usize, path: &Path, what: &str) -> Result<u32> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(parse_err(path, offset as u64, format!("truncated before {what}")));
    }
    Ok(u32::from_be_bytes(bytes[offset..end].try_into().unwrap()))
}

/// Loads an IDX image file as an N x (rows*cols) matrix with pixels
/// scaled by 1/255 into [0, 1].
pub fn load_idx_images(path: &Path) -> Result<Matrix> {
    let bytes = read_all(path)?;
    let magic = take_u32(&bytes, 0, path, "magic")?;
    if magic != IMAGE_MAGIC {
        return Err(parse_err(path, 0, format!("bad image magic 0x{magic:08x}")));
    }
    let n = take_u32(&bytes, 4, path, "item count")? as usize;
    let rows = take_u32(&bytes, 8, path, "row count")? as usize;
    let cols = take_u32(&bytes, 12, path, "col count")? as usize;
    let pixels = n * rows * cols;
    if bytes.len() < 16 + pixels {
        return Err(parse_err(
            path,
            bytes.len() as u64,
            format!("truncated pixel data: want {} bytes, have {}", pixels, bytes.len() - 16),
        ));
    }
    let data = bytes[16..16 + pixels]
        .iter()
        .map(|&b| b as f64 / 255.0)
        .collect();
    Matrix::from_vec(n, rows * cols, data)
}

/// Loads an IDX label file as a one-hot N x 10 matrix.
pub fn load_idx_labels(path: &Path) -> Result<Matrix> {
    let bytes = read_all(path)?;
    let magic = take_u32(&bytes, 0, path, "magic")?;
    if magic != LABEL_MAGIC {
        return Err(parse_err(path, 0, format!("bad label magic 0x{magic:08x}")));
    }
    let n = take_u32(&bytes, 4, path, "item count")? as usize;
    if bytes.len() < 8 + n {
        return Err(parse_err(
            path,
            bytes.len() as u64,
            format!("truncated label data: want {} bytes, have {}", n, bytes.len() - 8),
        ));
    }
    let mut out = Matrix::zeros(n, 10);
    for (i, &b) in bytes[8..8 + n].iter().enumerate() {
        if b > 9 {
            return Err(parse_err(path, (8 + i) as u64, format!("label {b} out of 0-9")));
        }
        out.set(i, b as usize, 1.0);
    }
    Ok(out)
}

/// Writes images (values in [0,1], quantized to bytes) in IDX format.
pub fn write_idx_images(path: &Path, images: &Matrix, rows: usize, cols: usize) -> Result<()> {
    if images.cols() != rows * cols {
        return Err(Error::InvalidConfig(format!(
            "image width {} does not match {}x{}",
            images.cols(),
            rows,
            cols
        )));
    }
    let mut bytes = Vec::with_capacity(16 + images.rows() * images.cols());
    bytes.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
    bytes.extend_from_slice(&(images.rows() as u32).to_be_bytes());
    bytes.extend_from_slice(&(rows as u32).to_be_bytes());
    bytes.extend_from_slice(&(cols as u32).to_be_bytes());
    for &v in images.data() {
        bytes.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
    }
    Ok(std::fs::write(path, bytes)?)
}

/// Writes one-hot labels in IDX format.
pub fn write_idx_labels(path: &Path, labels: &Matrix) -> Result<()> {
    let mut bytes = Vec::with_capacity(8 + labels.rows());
    bytes.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    bytes.extend_from_slice(&(labels.rows() as u32).to_be_bytes());
    for i in 0..labels.rows() {
        let class = labels
            .row(i)
            .iter()
            .position(|&v| v == 1.0)
            .ok_or_else(|| Error::MalformedLabels(format!("row {i} has no 1.0 entry")))?;
        bytes.push(class as u8);
    }
    Ok(std::fs::write(path, bytes)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    /// Two 2x2 "images" with pixel bytes 0,51,102,153 and 204,255,0,51.
    fn image_fixture_bytes() -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(&0x0000_0803u32.to_be_bytes());
        b.extend_from_slice(&2u32.to_be_bytes());
        b.extend_from_slice(&2u32.to_be_bytes());
        b.extend_from_slice(&2u32.to_be_bytes());
        b.extend_from_slice(&[0, 51, 102, 153, 204, 255, 0, 51]);
        b
    }

    #[test]
    fn hand_built_image_fixture_parses_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("imgs-idx3-ubyte");
        std::fs::write(&path, image_fixture_bytes()).unwrap();
        let m = load_idx_images(&path).unwrap();
        assert_eq!(m.shape(), (2, 4));
        let expect = [
            0.0,
            51.0 / 255.0,
            102.0 / 255.0,
            153.0 / 255.0,
            204.0 / 255.0,
            1.0,
            0.0,
            51.0 / 255.0,
        ];
        assert_eq!(m.data(), &expect);
    }

    #[test]
    fn gzip_variant_parses_identically() {
        let dir = tempfile::tempdir().unwrap();
        let plain = dir.path().join("imgs-idx3-ubyte");
        let gz = dir.path().join("imgs-idx3-ubyte.gz");
        std::fs::write(&plain, image_fixture_bytes()).unwrap();
        let mut enc = flate2::write::GzEncoder::new(Vec::new(), flate2::Compression::default());
        enc.write_all(&image_fixture_bytes()).unwrap();
        std::fs::write(&gz, enc.finish().unwrap()).unwrap();
        assert_eq!(load_idx_images(&plain).unwrap(), load_idx_images(&gz).unwrap());
    }

    #[test]
    fn label_fixture_and_range_check() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels-idx1-ubyte");
        let mut b = Vec::new();
        b.extend_from_slice(&0x0000_0801u32.to_be_bytes());
        b.extend_from_slice(&3u32.to_be_bytes());
        b.extend_from_slice(&[7, 0, 9]);
        std::fs::write(&path, &b).unwrap();
        let labels = load_idx_labels(&path).unwrap();
        assert_eq!(labels.get(0, 7), 1.0);
        assert_eq!(labels.get(1, 0), 1.0);
        assert_eq!(labels.get(2, 9), 1.0);
        assert_eq!(labels.data().iter().sum::<f64>(), 3.0);

        // Label 10 at byte offset 8+1 must be rejected with that offset.
        b[9] = 10;
        std::fs::write(&path, &b).unwrap();
        let err = load_idx_labels(&path).unwrap_err().to_string();
        assert!(err.contains("byte 9"), "offset missing from: {err}");
    }

    #[test]
    fn bad_magic_and_truncation_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("imgs-idx3-ubyte");
        let mut b = image_fixture_bytes();
        b[0] = 0xff;
        std::fs::write(&path, &b).unwrap();
        assert!(load_idx_images(&path).unwrap_err().to_string().contains("magic"));

        let truncated = &image_fixture_bytes()[..18];
        std::fs::write(&path, truncated).unwrap();
        assert!(load_idx_images(&path).unwrap_err().to_string().contains("truncated"));
    }

    #[test]
    fn writer_reader_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let imgs = Matrix::from_fn(3, 784, |i, j| ((i * 37 + j) % 256) as f64 / 255.0);
        let labels = Matrix::from_fn(3, 10, |i, j| if j == (i * 3) % 10 { 1.0 } else { 0.0 });
        let ipath = dir.path().join("imgs-idx3-ubyte");
        let lpath = dir.path().join("labels-idx1-ubyte");
        write_idx_images(&ipath, &imgs, 28, 28).unwrap();
        write_idx_labels(&lpath, &labels).unwrap();
        assert_eq!(load_idx_images(&ipath).unwrap(), imgs);
        assert_eq!(load_idx_labels(&lpath).unwrap(), labels);
    }
}
