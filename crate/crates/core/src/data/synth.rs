//! Procedural seven-segment digit images.
//!
//! A deterministic stand-in for the real handwritten-digit files when
//! they are not on disk: 28x28 grayscale digits rendered from a
//! seven-segment layout with per-sample shift, intensity, and noise.
//! Both image halves carry class information (some digit pairs differ
//! only in a left- or right-half segment), which is what the
//! two-modality benchmark needs. Written through the same IDX files the
//! real dataset uses.

use std::path::Path;

use crate::data::{idx, IMAGE_PIXELS, IMAGE_SIDE};
use crate::error::Result;
use crate::numeric::{derive_seed, Matrix, Rng};

/// Segment layout, (row, col) half-open pixel rectangles:
/// A top bar, G middle bar, D bottom bar, F/E left column, B/C right column.
const SEGMENTS: [(usize, usize, usize, usize); 7] = [
    (3, 6, 7, 21),   // A
    (4, 15, 20, 23), // B
    (14, 25, 20, 23),// C
    (23, 26, 7, 21), // D
    (14, 25, 5, 8),  // E
    (4, 15, 5, 8),   // F
    (13, 16, 7, 21), // G
];

/// Active segments per digit, as a bitmask over ABCDEFG.
const DIGIT_SEGMENTS: [u8; 10] = [
    0b0111111, // 0: ABCDEF
    0b0000110, // 1: BC
    0b1011011, // 2: ABDEG
    0b1001111, // 3: ABCDG
    0b1100110, // 4: BCFG
    0b1101101, // 5: ACDFG
    0b1111101, // 6: ACDEFG
    0b0000111, // 7: ABC
    0b1111111, // 8
    0b1101111, // 9: ABCDFG
];

fn render(class: usize, rng: &mut Rng) -> Vec<f64> {
    let dx = rng.below(5) as isize - 2;
    let dy = rng.below(5) as isize - 2;
    let intensity = rng.range(0.65, 1.0);
    let mask = DIGIT_SEGMENTS[class];
    let mut pixels = Vec::with_capacity(IMAGE_PIXELS);
    for r in 0..IMAGE_SIDE as isize {
        for c in 0..IMAGE_SIDE as isize {
            let (rr, cc) = (r - dy, c - dx);
            let lit = (0..7).any(|s| {
                mask & (1 << s) != 0 && {
                    let (r0, r1, c0, c1) = SEGMENTS[s];
                    rr >= r0 as isize && rr < r1 as isize && cc >= c0 as isize && cc < c1 as isize
                }
            });
            let v = if lit {
                intensity * (1.0 - 0.25 * rng.uniform())
            } else {
                0.12 * rng.uniform()
            };
            pixels.push(v.clamp(0.0, 1.0));
        }
    }
    pixels
}

/// Generates n images (N x 784 in [0,1]) with one-hot labels (N x 10).
/// Sample i depends only on (seed, i).
pub fn generate(n: usize, seed: u64) -> (Matrix, Matrix) {
    let mut images = Matrix::zeros(n, IMAGE_PIXELS);
    let mut labels = Matrix::zeros(n, 10);
    for i in 0..n {
        let mut rng = Rng::new(derive_seed(seed, i as u64));
        let class = rng.below(10);
        images.row_mut(i).copy_from_slice(&render(class, &mut rng));
        labels.set(i, class, 1.0);
    }
    (images, labels)
}

/// Writes a train/test pair under `dir` using the standard file names.
pub fn write_dataset(dir: &Path, train_n: usize, test_n: usize, seed: u64) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let (train_images, train_labels) = generate(train_n, derive_seed(seed, 0x7261_696e));
    let (test_images, test_labels) = generate(test_n, derive_seed(seed, 0x7465_7374));
    idx::write_idx_images(&dir.join("train-images-idx3-ubyte"), &train_images, IMAGE_SIDE, IMAGE_SIDE)?;
    idx::write_idx_labels(&dir.join("train-labels-idx1-ubyte"), &train_labels)?;
    idx::write_idx_images(&dir.join("t10k-images-idx3-ubyte"), &test_images, IMAGE_SIDE, IMAGE_SIDE)?;
    idx::write_idx_labels(&dir.join("t10k-labels-idx1-ubyte"), &test_labels)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic_and_in_range() {
        let (a_img, a_lab) = generate(20, 5);
        let (b_img, b_lab) = generate(20, 5);
        assert_eq!(a_img, b_img);
        assert_eq!(a_lab, b_lab);
        assert!(a_img.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn classes_are_distinguishable_by_template_match() {
        // Nearest noise-free template should recover the class for the
        // vast majority of samples; the renderer is useless otherwise.
        let templates: Vec<Vec<f64>> = (0..10)
            .map(|c| {
                let mut canvas = vec![0.0; IMAGE_PIXELS];
                let mask = DIGIT_SEGMENTS[c];
                for r in 0..IMAGE_SIDE {
                    for col in 0..IMAGE_SIDE {
                        let lit = (0..7).any(|s| {
                            mask & (1 << s) != 0 && {
                                let (r0, r1, c0, c1) = SEGMENTS[s];
                                r >= r0 && r < r1 && col >= c0 && col < c1
                            }
                        });
                        if lit {
                            canvas[r * IMAGE_SIDE + col] = 1.0;
                        }
                    }
                }
                canvas
            })
            .collect();
        // Samples carry a +-2 pixel shift, so match against every
        // shifted template and keep the best alignment per class.
        let shifted_ssd = |row: &[f64], template: &[f64]| -> f64 {
            let side = IMAGE_SIDE as isize;
            let mut best = f64::INFINITY;
            for dy in -2..=2isize {
                for dx in -2..=2isize {
                    let mut ssd = 0.0;
                    for r in 0..side {
                        for c in 0..side {
                            let (tr, tc) = (r - dy, c - dx);
                            let t = if (0..side).contains(&tr) && (0..side).contains(&tc) {
                                template[(tr * side + tc) as usize]
                            } else {
                                0.0
                            };
                            let x = row[(r * side + c) as usize];
                            ssd += (x - t) * (x - t);
                        }
                    }
                    best = best.min(ssd);
                }
            }
            best
        };
        let (images, labels) = generate(200, 17);
        let mut correct = 0;
        for i in 0..200 {
            let row = images.row(i);
            let best = (0..10)
                .min_by(|&a, &b| {
                    shifted_ssd(row, &templates[a])
                        .partial_cmp(&shifted_ssd(row, &templates[b]))
                        .unwrap()
                })
                .unwrap();
            if labels.get(i, best) == 1.0 {
                correct += 1;
            }
        }
        assert!(correct >= 180, "template match too weak: {correct}/200");
    }
}
