//! The train command: optional CD pretraining, fine-tuning, artifacts.

use dmf_core::fusion::checkpoint;
use dmf_core::fusion::topology::{FusionTopology, ModelVariant};
use dmf_core::numeric::Rng;
use dmf_core::pretrain::{pretrain_stack, PretrainConfig};
use dmf_core::train::{
    finetune_discriminative, finetune_encoder_decoder, write_curve_csv, EpochRecord,
};
use dmf_core::Result;

use crate::args::ExperimentConfig;
 
use crate::rundir::{run_dir, write_manifest};

/// Everything after data loading; errors here are numeric aborts
/// (exit 3). Takes preloaded data so the sweep can share one dataset
/// read across cells.
pub fn train_on(
    cfg: &ExperimentConfig,
    data: (
        dmf_core::data::MultimodalBatch,
        dmf_core::data::MultimodalBatch,
        dmf_core::data::MultimodalBatch,
        dmf_core::data::MultimodalBatch,
    ),
) -> Result<(dmf_core::ParamSet, Vec<EpochRecord>)> {
    let (train, test, train_clean, test_clean) = data;
    let topology = FusionTopology::halves_benchmark(cfg.train.scheme);
    let mut rng = Rng::new(cfg.train.seed);
    let pretrain_config = PretrainConfig {
        epochs: cfg.train.pretrain_epochs,
        lr: cfg.train.pretrain_lr,
        batch_size: cfg.train.batch_size,
        init_scale: dmf_core::fusion::params::DEFAULT_INIT_SCALE,
    };

    let dir = run_dir(cfg);
    std::fs::create_dir_all(&dir)?;

    let (params, curve) = match cfg.train.variant {
        ModelVariant::Discriminative => {
            // The eval-time input condition is applied inside the
            // per-epoch evaluation; training sees both (damaged)
            // modalities.
            let (params, _) =
                pretrain_stack(&topology, cfg.train.variant, &train, &pretrain_config, &mut rng)?;
            eprintln!(
                "pretrained {} units for {} epochs",
                topology.levels() * 3,
                cfg.train.pretrain_epochs
            );
            finetune_discriminative(params, &train, &test, &cfg.train)?
        }
        ModelVariant::EncoderDecoder => {
            // The encoder sees the configured input condition during
            // training and testing; reconstruction targets stay clean.
            let input_train = cfg.train.eval_modality.apply(&train);
            let input_test = cfg.train.eval_modality.apply(&test);
            let (params, _) = pretrain_stack(
                &topology,
                cfg.train.variant,
                &input_train,
                &pretrain_config,
                &mut rng,
            )?;
            finetune_encoder_decoder(
                params,
                &input_train,
                &train_clean,
                &input_test,
                &test_clean,
                &cfg.train,
            )?
        }
    };

    for rec in &curve {
        eprintln!(
            "epoch {:>3}: loss {:.6} test_error {:.4} ({:.2}s)",
            rec.epoch, rec.loss, rec.test_error, rec.seconds
        );
    }
    checkpoint::save(&params, &dir.join("checkpoint.dmf"))?;
    write_curve_csv(&dir.join("curve.csv"), &curve)?;
    write_manifest(&dir.join("manifest.txt"), cfg, &curve)?;
    println!("run directory: {}", dir.display());
    if let Some(last) = curve.last() {
        println!(
            "final: loss {:.6} test_error {:.6}",
            last.loss, last.test_error
        );
    }
    Ok((params, curve))
}
