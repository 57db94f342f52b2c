//! Dataset ingestion and the two-modality view of digit images:
//! loading, left/right half splitting, seeded damage corruption, and
//! modality dropping.

pub mod idx;
pub mod synth;

use std::path::Path;

use crate::error::{Error, Result};
use crate::numeric::{derive_seed, Matrix, Rng};

/// Image geometry the halves protocol assumes.
pub const IMAGE_SIDE: usize = 28;
pub const IMAGE_PIXELS: usize = IMAGE_SIDE * IMAGE_SIDE;
pub const HALF_PIXELS: usize = IMAGE_PIXELS / 2;

/// One modality of the pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Modality {
    Left,
    Right,
}

/// Paired left/right half-images with one-hot labels.
///
/// When a modality is marked absent its matrix is all-zero; that is the
/// missing-modality convention everywhere in this crate.
#[derive(Debug, Clone, PartialEq)]
pub struct MultimodalBatch {
    pub left: Matrix,
    pub right: Matrix,
    pub labels: Matrix,
    pub left_present: bool,
    pub right_present: bool,
}

impl MultimodalBatch {
    pub fn new(left: Matrix, right: Matrix, labels: Matrix) -> Result<Self> {
        if left.rows() != right.rows() || left.rows() != labels.rows() {
            return Err(Error::InvalidConfig(format!(
                "batch row counts disagree: left {}, right {}, labels {}",
                left.rows(),
                right.rows(),
                labels.rows()
            )));
        }
        Ok(MultimodalBatch {
            left,
            right,
            labels,
            left_present: true,
            right_present: true,
        })
    }

    pub fn len(&self) -> usize {
        self.left.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Copies the named sample rows into a new batch.
    pub fn select(&self, rows: &[usize]) -> MultimodalBatch {
        MultimodalBatch {
            left: self.left.select_rows(rows),
            right: self.right.select_rows(rows),
            labels: self.labels.select_rows(rows),
            left_present: self.left_present,
            right_present: self.right_present,
        }
    }

    /// The first n samples.
    pub fn take(&self, n: usize) -> MultimodalBatch {
        let rows: Vec<usize> = (0..n.min(self.len())).collect();
        self.select(&rows)
    }
}

/// How much of which modality to zero out, and with what seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorruptionSpec {
    /// Fraction of pixels to zero, in [0, 1].
    pub level: f64,
    pub seed: u64,
    pub target: Modality,
}

/// Splits N x 784 images into left and right 392-wide halves
/// (columns 0-13 and 14-27 of each pixel row).
pub fn split_halves(images: &Matrix) -> Result<(Matrix, Matrix)> {
    if images.cols() != IMAGE_PIXELS {
        return Err(Error::InvalidConfig(format!(
            "expected {}-pixel images, got width {}",
            IMAGE_PIXELS,
            images.cols()
        )));
    }
    let half = IMAGE_SIDE / 2;
    let left_cols: Vec<usize> = (0..IMAGE_SIDE)
        .flat_map(|r| (0..half).map(move |c| r * IMAGE_SIDE + c))
        .collect();
    let right_cols: Vec<usize> = (0..IMAGE_SIDE)
        .flat_map(|r| (half..IMAGE_SIDE).map(move |c| r * IMAGE_SIDE + c))
        .collect();
    Ok((images.select_cols(&left_cols), images.select_cols(&right_cols)))
}

/// Reassembles full images from halves; exact inverse of [`split_halves`].
pub fn merge_halves(left: &Matrix, right: &Matrix) -> Result<Matrix> {
    if left.cols() != HALF_PIXELS || right.cols() != HALF_PIXELS || left.rows() != right.rows() {
        return Err(Error::shape("merge_halves", left.shape(), right.shape()));
    }
    let half = IMAGE_SIDE / 2;
    let mut out = Matrix::zeros(left.rows(), IMAGE_PIXELS);
    for i in 0..left.rows() {
        for r in 0..IMAGE_SIDE {
            for c in 0..half {
                out.set(i, r * IMAGE_SIDE + c, left.get(i, r * half + c));
                out.set(i, r * IMAGE_SIDE + half + c, right.get(i, r * half + c));
            }
        }
    }
    Ok(out)
}

/// Zeroes an exact per-sample pixel count of the target modality.
///
/// Each sample's mask is drawn without replacement from an RNG seeded by
/// (spec.seed, sample index) only, so replaying a spec reproduces the
/// batch bit for bit. Exactly round(level * width) positions are zeroed
/// per sample; level 0 returns the input unchanged.
pub fn corrupt(batch: &MultimodalBatch, spec: &CorruptionSpec) -> Result<MultimodalBatch> {
    if !(0.0..=1.0).contains(&spec.level) {
        return Err(Error::InvalidConfig(format!(
            "corruption level {} outside [0, 1]",
            spec.level
        )));
    }
    let mut out = batch.clone();
    let target = match spec.target {
        Modality::Left => &mut out.left,
        Modality::Right => &mut out.right,
    };
    let width = target.cols();
    let k = (spec.level * width as f64).round() as usize;
    if k == 0 {
        return Ok(out);
    }
    for i in 0..target.rows() {
        let mut rng = Rng::new(derive_seed(spec.seed, i as u64));
        let mask = rng.choose_without_replacement(width, k);
        let row = target.row_mut(i);
        for p in mask {
            row[p] = 0.0;
        }
    }
    Ok(out)
}

/// Zeroes the named modality and flags it absent. Idempotent.
pub fn drop_modality(batch: &MultimodalBatch, which: Modality) -> MultimodalBatch {
    let mut out = batch.clone();
    match which {
        Modality::Left => {
            out.left = Matrix::zeros(out.left.rows(), out.left.cols());
            out.left_present = false;
        }
        Modality::Right => {
            out.right = Matrix::zeros(out.right.rows(), out.right.cols());
            out.right_present = false;
        }
    }
    out
}

/// The four standard dataset file names, tried plain and `.gz`.
fn find_file(dir: &Path, name: &str) -> Result<std::path::PathBuf> {
    let plain = dir.join(name);
    if plain.exists() {
        return Ok(plain);
    }
    let gz = dir.join(format!("{name}.gz"));
    if gz.exists() {
        return Ok(gz);
    }
    Err(Error::InvalidConfig(format!(
        "missing dataset file {} (or .gz) under {}",
        name,
        dir.display()
    )))
}

/// Loads the train and test splits from a directory holding the four
/// standard files, splitting each image into half-image modalities.
pub fn load_halves_dir(dir: &Path) -> Result<(MultimodalBatch, MultimodalBatch)> {
    let train_images = idx::load_idx_images(&find_file(dir, "train-images-idx3-ubyte")?)?;
    let train_labels = idx::load_idx_labels(&find_file(dir, "train-labels-idx1-ubyte")?)?;
    let test_images = idx::load_idx_images(&find_file(dir, "t10k-images-idx3-ubyte")?)?;
    let test_labels = idx::load_idx_labels(&find_file(dir, "t10k-labels-idx1-ubyte")?)?;
    if train_images.rows() != train_labels.rows() || test_images.rows() != test_labels.rows() {
        return Err(Error::InvalidConfig(
            "image/label counts disagree".to_string(),
        ));
    }
    let (train_l, train_r) = split_halves(&train_images)?;
    let (test_l, test_r) = split_halves(&test_images)?;
    Ok((
        MultimodalBatch::new(train_l, train_r, train_labels)?,
        MultimodalBatch::new(test_l, test_r, test_labels)?,
    ))
}
