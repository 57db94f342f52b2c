//! Data preparation shared by train, eval, and sweep, so evaluation
//! reproduces exactly the test condition a training run saw.

use std::path::Path;

use dmf_core::data::{corrupt, load_halves_dir, CorruptionSpec, Modality, MultimodalBatch};
use dmf_core::numeric::derive_seed;
use dmf_core::Result;

/// Substream tags for the train- and test-set corruption masks.
const TRAIN_CORRUPTION_STREAM: u64 = 0x6472_7472;
const TEST_CORRUPTION_STREAM: u64 = 0x6472_7465;

pub fn corrupt_train(batch: &MultimodalBatch, damage: f64, seed: u64) -> Result<MultimodalBatch> {
    corrupt(
        batch,
        &CorruptionSpec {
            level: damage,
            seed: derive_seed(seed, TRAIN_CORRUPTION_STREAM),
            target: Modality::Right,
        },
    )
}

pub fn corrupt_test(batch: &MultimodalBatch, damage: f64, seed: u64) -> Result<MultimodalBatch> {
    corrupt(
        batch,
        &CorruptionSpec {
            level: damage,
            seed: derive_seed(seed, TEST_CORRUPTION_STREAM),
            target: Modality::Right,
        },
    )
}

/// Loads both splits and applies the experiment's damage level to each
/// (a separate model is trained per damage level, on damaged data).
pub fn load_damaged(
    data_dir: &Path,
    damage: f64,
    seed: u64,
) -> Result<(MultimodalBatch, MultimodalBatch, MultimodalBatch, MultimodalBatch)> {
    let (train_clean, test_clean) = load_halves_dir(data_dir)?;
    let train = corrupt_train(&train_clean, damage, seed)?;
    let test = corrupt_test(&test_clean, damage, seed)?;
    Ok((train, test, train_clean, test_clean))
}
