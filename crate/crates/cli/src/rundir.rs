//! Run-directory layout and manifests.
//!
//! Every run lives in `<out>/<scheme>_<damage>_<modality>/` holding
//! checkpoint.dmf, curve.csv, manifest.txt, and result.json. The
//! manifest echoes the full resolved configuration in the same
//! key=value format the `--config` flag reads, so a manifest replays a
//! run verbatim; measured timings ride along as comment lines.

use std::path::{Path, PathBuf};

use dmf_core::train::EpochRecord;
use dmf_core::Result;

use crate::args::ExperimentConfig;

/// Formats a damage level the way run directories spell it (0, 0.3, ...).
pub fn damage_label(damage: f64) -> String {
    format!("{damage}")
}

pub fn run_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out.join(format!(
        "{}_{}_{}",
        cfg.train.scheme,
        damage_label(cfg.train.damage_level),
        cfg.train.eval_modality
    ))
}

pub fn write_manifest(path: &Path, cfg: &ExperimentConfig, curve: &[EpochRecord]) -> Result<()> {
    let mut text = String::new();
    text.push_str(&format!("scheme={}\n", cfg.train.scheme));
    text.push_str(&format!("variant={}\n", cfg.train.variant));
    text.push_str(&format!("damage={}\n", damage_label(cfg.train.damage_level)));
    text.push_str(&format!("modality={}\n", cfg.train.eval_modality));
    text.push_str(&format!("epochs={}\n", cfg.train.epochs));
    text.push_str(&format!("batch_size={}\n", cfg.train.batch_size));
    text.push_str(&format!("lr={}\n", cfg.train.lr));
    text.push_str(&format!("pretrain_epochs={}\n", cfg.train.pretrain_epochs));
    text.push_str(&format!("pretrain_lr={}\n", cfg.train.pretrain_lr));
    text.push_str(&format!("seed={}\n", cfg.train.seed));
    text.push_str(&format!("data_dir={}\n", cfg.data_dir.display()));
    text.push_str(&format!("out={}\n", cfg.out.display()));
    // Wall-clock timings are observational, not part of the replayable
    // configuration; they live in comments.
    let total: f64 = curve.iter().map(|r| r.seconds).sum();
    text.push_str(&format!("# wall seconds total={total:.3}\n"));
    for rec in curve {
        text.push_str(&format!("# epoch {} seconds={:.3}\n", rec.epoch, rec.seconds));
    }
    Ok(std::fs::write(path, text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn damage_labels_are_minimal() {
        assert_eq!(damage_label(0.0), "0");
        assert_eq!(damage_label(0.3), "0.3");
        assert_eq!(damage_label(0.5), "0.5");
        assert_eq!(damage_label(0.7), "0.7");
    }
}
