//! The eval command: load a checkpoint, rebuild the test condition,
//! report the error as JSON.

use std::path::{Path, PathBuf};

use dmf_core::data::MultimodalBatch;
use dmf_core::train::{evaluate, EvalModality};
use dmf_core::{Error, ParamSet, Result};
use serde::{Deserialize, Serialize};

use crate::args::EvalArgs;
use crate::commands::common::corrupt_test;

#[derive(Debug, Serialize, Deserialize)]
pub struct EvalResult {
    pub scheme: String,
    pub damage: f64,
    pub modality: String,
    pub error: f64,
}

/// Rebuilds the (damage, seed) test condition and measures the error.
/// This is the same corruption derivation and evaluation call the
/// training loop uses per epoch, so evaluating a just-trained
/// checkpoint reproduces its curve's final row exactly.
pub fn measure(
    params: &ParamSet,
    test_clean: &MultimodalBatch,
    damage: f64,
    seed: u64,
    modality: EvalModality,
) -> Result<EvalResult> {
    let test = corrupt_test(test_clean, damage, seed)?;
    let error = evaluate(params, &test, modality)?;
    Ok(EvalResult {
        scheme: params.topology.scheme.to_string(),
        damage,
        modality: modality.to_string(),
        error,
    })
}

/// Prints the result and writes result.json.
pub fn emit(result: &EvalResult, path: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(result)
        .map_err(|e| Error::InvalidConfig(format!("cannot serialize result: {e}")))?;
    println!("{json}");
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    Ok(std::fs::write(path, json)?)
}

pub fn result_path(args: &EvalArgs) -> PathBuf {
    match &args.out {
        Some(dir) => dir.join("result.json"),
        None => args
            .checkpoint
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join("result.json"),
    }
}
