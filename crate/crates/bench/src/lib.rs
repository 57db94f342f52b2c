//! Shared fixtures for the criterion benches.

use dmf_core::data::MultimodalBatch;
use dmf_core::numeric::{Matrix, Rng};

/// A random two-modality batch with half-image widths.
pub fn bench_batch(n: usize, seed: u64) -> MultimodalBatch {
    let mut rng = Rng::new(seed);
    let left = Matrix::from_fn(n, 392, |_, _| rng.uniform());
    let right = Matrix::from_fn(n, 392, |_, _| rng.uniform());
    let labels = Matrix::from_fn(n, 10, |i, j| if j == i % 10 { 1.0 } else { 0.0 });
    MultimodalBatch::new(left, right, labels).unwrap()
}
