//! The sweep command: the full scheme x damage x modality grid, one
//! trained model per cell, resumable through each cell's result.json.

use std::path::Path;
use std::sync::Mutex;

use dmf_core::data::MultimodalBatch;
use dmf_core::fusion::topology::FusionScheme;
use dmf_core::numeric::derive_seed;
use dmf_core::train::EvalModality;
use dmf_core::{Error, Result};

use crate::args::ExperimentConfig;
use crate::commands::common::{corrupt_test, corrupt_train};
use crate::commands::{eval, train};
use crate::rundir::{damage_label, run_dir};

pub const DAMAGE_GRID: [f64; 4] = [0.0, 0.3, 0.5, 0.7];
pub const SCHEME_GRID: [FusionScheme; 3] =
    [FusionScheme::Emf, FusionScheme::Imf, FusionScheme::Dmf];
pub const MODALITY_GRID: [EvalModality; 2] = [EvalModality::Both, EvalModality::Right];

/// Grid cells in a fixed enumeration order; the per-cell seed derives
/// from (base seed, cell index), so reruns reproduce every cell.
pub fn cells() -> Vec<(EvalModality, FusionScheme, f64)> {
    let mut out = Vec::with_capacity(24);
    for modality in MODALITY_GRID {
        for scheme in SCHEME_GRID {
            for damage in DAMAGE_GRID {
                out.push((modality, scheme, damage));
            }
        }
    }
    out
}

fn cell_config(base: &ExperimentConfig, index: usize) -> ExperimentConfig {
    let (modality, scheme, damage) = cells()[index];
    let mut cfg = base.clone();
    cfg.train.scheme = scheme;
    cfg.train.damage_level = damage;
    cfg.train.eval_modality = modality;
    cfg.train.seed = derive_seed(base.train.seed, index as u64);
    cfg
}

fn run_cell(
    base: &ExperimentConfig,
    index: usize,
    train_clean: &MultimodalBatch,
    test_clean: &MultimodalBatch,
) -> Result<()> {
    let cfg = cell_config(base, index);
    let dir = run_dir(&cfg);
    if dir.join("result.json").exists() {
        println!("cell {:>2} {}: complete, skipping", index, dir.display());
        return Ok(());
    }
    let train_damaged = corrupt_train(train_clean, cfg.train.damage_level, cfg.train.seed)?;
    let test_damaged = corrupt_test(test_clean, cfg.train.damage_level, cfg.train.seed)?;
    let (params, _) = train::train_on(
        &cfg,
        (train_damaged, test_damaged, train_clean.clone(), test_clean.clone()),
    )?;
    let result = eval::measure(
        &params,
        test_clean,
        cfg.train.damage_level,
        cfg.train.seed,
        cfg.train.eval_modality,
    )?;
    eval::emit(&result, &dir.join("result.json"))
}

/// Runs every incomplete cell (optionally on several worker threads)
/// and assembles the grid CSV from the per-cell results.
pub fn run(
    base: &ExperimentConfig,
    jobs: usize,
    train_clean: &MultimodalBatch,
    test_clean: &MultimodalBatch,
) -> Result<()> {
    let jobs = jobs.max(1);
    let next = Mutex::new(0usize);
    let failures: Mutex<Vec<Error>> = Mutex::new(Vec::new());
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let index = {
                    let mut guard = next.lock().unwrap();
                    let i = *guard;
                    *guard += 1;
                    i
                };
                if index >= cells().len() || !failures.lock().unwrap().is_empty() {
                    break;
                }
                if let Err(e) = run_cell(base, index, train_clean, test_clean) {
                    failures.lock().unwrap().push(e);
                }
            });
        }
    });
    if let Some(err) = failures.into_inner().unwrap().into_iter().next() {
        return Err(err);
    }
    write_grid_csv(base)
}

fn write_grid_csv(base: &ExperimentConfig) -> Result<()> {
    let mut text = String::from("scheme,damage,modality,error\n");
    for (index, (modality, scheme, damage)) in cells().into_iter().enumerate() {
        let cfg = cell_config(base, index);
        let path = run_dir(&cfg).join("result.json");
        let result = read_result(&path)?;
        text.push_str(&format!(
            "{scheme},{},{modality},{:.6}\n",
            damage_label(damage),
            result.error
        ));
    }
    let path = base.out.join("sweep.csv");
    std::fs::write(&path, text)?;
    println!("grid written to {}", path.display());
    Ok(())
}

pub fn read_result(path: &Path) -> Result<eval::EvalResult> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text)
        .map_err(|e| Error::InvalidConfig(format!("bad result file {}: {e}", path.display())))
}
