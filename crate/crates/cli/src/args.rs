//! Flag definitions and config-file merging.
//!
//! Every training flag has a key=value twin in an optional config file
//! (`--config`); precedence is flags over file over built-in defaults.
//! Run manifests use the same key=value format, so replaying a manifest
//! is `dmf train --config manifest.txt`.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use dmf_core::fusion::topology::{FusionScheme, ModelVariant};
use dmf_core::train::{EvalModality, TrainConfig};
use dmf_core::{Error, Result};

#[derive(Debug, Parser)]
#[command(
    name = "dmf",
    about = "Dense multimodal fusion on half-digit images: train, evaluate, verify gradients, sweep the damage grid",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one model (optional CD pretraining, then fine-tuning).
    Train(TrainArgs),
    /// Evaluate a checkpoint under a damage level and input condition.
    Eval(EvalArgs),
    /// Verify every analytic gradient against finite differences.
    Gradcheck(GradcheckArgs),
    /// Full grid: scheme x damage {0,0.3,0.5,0.7} x modality {both,right}.
    Sweep(SweepArgs),
    /// Generate a synthetic two-halves digit dataset in IDX format.
    Synth(SynthArgs),
}

/// Flags shared by train and sweep, all optional so the config file can
/// fill the gaps.
#[derive(Debug, Clone, Args)]
pub struct TrainFlags {
    /// Fusion scheme: emf | imf | dmf
    #[arg(long)]
    pub scheme: Option<String>,
    /// Model variant: disc | encdec
    #[arg(long)]
    pub variant: Option<String>,
    /// Fraction of right-half pixels zeroed, in [0, 1]
    #[arg(long)]
    pub damage: Option<f64>,
    /// Input condition: both | left | right
    #[arg(long)]
    pub modality: Option<String>,
    /// Fine-tuning epochs
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Fine-tuning learning rate
    #[arg(long)]
    pub lr: Option<f64>,
    /// Layer-wise CD-1 epochs before fine-tuning (0 = random init)
    #[arg(long)]
    pub pretrain_epochs: Option<usize>,
    #[arg(long)]
    pub pretrain_lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory with the four standard dataset files
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// Output directory for run artifacts
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// key=value file supplying defaults for any of the above
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub flags: TrainFlags,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Checkpoint produced by `dmf train`
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data_dir: PathBuf,
    /// Damage level of the evaluation set
    #[arg(long, default_value_t = 0.0)]
    pub damage: f64,
    /// Input condition: both | left | right
    #[arg(long, default_value = "both")]
    pub modality: String,
    /// Seed; must match the training seed to reproduce its test set
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Where to write result.json (default: next to the checkpoint)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Random topologies per scheme
    #[arg(long, default_value_t = 10)]
    pub seeds: u64,
    /// Verification hook: flip a backward-pass term to prove the suite
    /// catches it (the run must then fail).
    #[arg(long, hide = true)]
    pub inject_sign_flip: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub flags: TrainFlags,
    /// Parallel worker threads over grid cells
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 2000)]
    pub train_n: usize,
    #[arg(long, default_value_t = 500)]
    pub test_n: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

/// Fully resolved training configuration plus paths.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub train: TrainConfig,
    pub data_dir: PathBuf,
    pub out: PathBuf,
}

fn parse_kv_file(path: &Path) -> Result<HashMap<String, String>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidConfig(format!("cannot read config {}: {e}", path.display())))?;
    let mut map = HashMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::InvalidConfig(format!(
                "{}:{}: expected key=value, got '{line}'",
                path.display(),
                lineno + 1
            )));
        };
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

const KNOWN_KEYS: [&str; 12] = [
    "scheme",
    "variant",
    "damage",
    "modality",
    "epochs",
    "batch_size",
    "lr",
    "pretrain_epochs",
    "pretrain_lr",
    "seed",
    "data_dir",
    "out",
];

fn parsed<T: std::str::FromStr>(map: &HashMap<String, String>, key: &str) -> Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    match map.get(key) {
        None => Ok(None),
        Some(raw) => raw
            .parse::<T>()
            .map(Some)
            .map_err(|e| Error::InvalidConfig(format!("config key {key}='{raw}': {e}"))),
    }
}

impl TrainFlags {
    /// Flags override config-file values, which override defaults.
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let file = match &self.config {
            Some(path) => {
                let map = parse_kv_file(path)?;
                for key in map.keys() {
                    if !KNOWN_KEYS.contains(&key.as_str()) {
                        return Err(Error::InvalidConfig(format!(
                            "unknown config key '{key}' in {}",
                            path.display()
                        )));
                    }
                }
                map
            }
            None => HashMap::new(),
        };
        let defaults = TrainConfig::default();
        let scheme: FusionScheme = match &self.scheme {
            Some(s) => s.parse()?,
            None => match parsed::<String>(&file, "scheme")? {
                Some(s) => s.parse()?,
                None => defaults.scheme,
            },
        };
        let variant: ModelVariant = match &self.variant {
            Some(s) => s.parse()?,
            None => match parsed::<String>(&file, "variant")? {
                Some(s) => s.parse()?,
                None => defaults.variant,
            },
        };
        let eval_modality: EvalModality = match &self.modality {
            Some(s) => s.parse()?,
            None => match parsed::<String>(&file, "modality")? {
                Some(s) => s.parse()?,
                None => defaults.eval_modality,
            },
        };
        let train = TrainConfig {
            scheme,
            variant,
            eval_modality,
            damage_level: self
                .damage
                .or(parsed(&file, "damage")?)
                .unwrap_or(defaults.damage_level),
            epochs: self.epochs.or(parsed(&file, "epochs")?).unwrap_or(defaults.epochs),
            batch_size: self
                .batch_size
                .or(parsed(&file, "batch_size")?)
                .unwrap_or(defaults.batch_size),
            lr: self.lr.or(parsed(&file, "lr")?).unwrap_or(defaults.lr),
            pretrain_epochs: self
                .pretrain_epochs
                .or(parsed(&file, "pretrain_epochs")?)
                .unwrap_or(defaults.pretrain_epochs),
            pretrain_lr: self
                .pretrain_lr
                .or(parsed(&file, "pretrain_lr")?)
                .unwrap_or(defaults.pretrain_lr),
            seed: self.seed.or(parsed(&file, "seed")?).unwrap_or(defaults.seed),
        };
        train.validate()?;
        let data_dir = self
            .data_dir
            .clone()
            .or(parsed::<PathBuf>(&file, "data_dir")?)
            .ok_or_else(|| Error::InvalidConfig("--data-dir is required".to_string()))?;
        let out = self
            .out
            .clone()
            .or(parsed::<PathBuf>(&file, "out")?)
            .unwrap_or_else(|| PathBuf::from("runs"));
        Ok(ExperimentConfig { train, data_dir, out })
    }
}
