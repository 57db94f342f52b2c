//! End-to-end training behavior on the synthetic halves dataset.

use dmf_core::data::{corrupt, split_halves, synth, CorruptionSpec, Modality, MultimodalBatch};
use dmf_core::fusion::params::init_params;
use dmf_core::fusion::topology::{FusionScheme, FusionTopology, ModelVariant};
use dmf_core::numeric::Rng;
use dmf_core::pretrain::{pretrain_stack, PretrainConfig};
use dmf_core::train::{
    encode_retrieval_demo, evaluate, finetune_discriminative, finetune_encoder_decoder,
    reconstruction_mse, EvalModality, TrainConfig,
};

fn halves_dataset(n: usize, seed: u64) -> MultimodalBatch {
    let (images, labels) = synth::generate(n, seed);
    let (left, right) = split_halves(&images).unwrap();
    MultimodalBatch::new(left, right, labels).unwrap()
}

#[test]
fn discriminative_training_learns_the_synthetic_digits() {
    // The paper's pipeline: layer-wise CD initialization, then
    // fine-tune. Random init alone leaves a deep sigmoid net on its
    // ln(10) plateau for far longer than this budget.
    let train = halves_dataset(600, 71);
    let test = halves_dataset(200, 72);
    let topology = FusionTopology::halves_small(FusionScheme::Dmf);
    let pre = PretrainConfig { epochs: 15, lr: 0.1, batch_size: 50, init_scale: 0.05 };
    let (params, _) =
        pretrain_stack(&topology, ModelVariant::Discriminative, &train, &pre, &mut Rng::new(5))
            .unwrap();
    let config = TrainConfig { epochs: 40, batch_size: 50, lr: 2.0, seed: 9, ..Default::default() };
    let (trained, curve) = finetune_discriminative(params, &train, &test, &config).unwrap();
    assert_eq!(curve.len(), 40);
    assert!(curve.last().unwrap().loss < curve.first().unwrap().loss);
    let err = evaluate(&trained, &test, EvalModality::Both).unwrap();
    assert!(err < 0.15, "synthetic digits should be mostly learnable, got error {err}");
    // Dropping the left modality at eval time cannot help.
    let err_right_only = evaluate(&trained, &test, EvalModality::Right).unwrap();
    assert!(err_right_only >= err);
}

#[test]
fn damage_during_training_and_eval_is_reproducible() {
    let clean = halves_dataset(120, 73);
    let spec = CorruptionSpec { level: 0.5, seed: 2024, target: Modality::Right };
    let damaged_a = corrupt(&clean, &spec).unwrap();
    let damaged_b = corrupt(&clean, &spec).unwrap();
    assert_eq!(damaged_a, damaged_b);

    let topology = FusionTopology::halves_small(FusionScheme::Imf);
    let config = TrainConfig { epochs: 2, batch_size: 40, seed: 3, ..Default::default() };
    let run = |data: &MultimodalBatch| {
        let params =
            init_params(&topology, ModelVariant::Discriminative, &mut Rng::new(8), 0.05).unwrap();
        finetune_discriminative(params, data, data, &config).unwrap()
    };
    let (p1, _) = run(&damaged_a);
    let (p2, _) = run(&damaged_b);
    assert_eq!(p1, p2);
}

#[test]
fn cross_modal_reconstruction_improves_over_epochs() {
    // Train with the right modality dropped at the input; the held-out
    // right-half reconstruction error must fall from the first epoch to
    // the last on at least 4 of 5 seeds.
    let clean_train = halves_dataset(400, 74);
    let clean_test = halves_dataset(150, 75);
    let input_train = EvalModality::Left.apply(&clean_train);
    let input_test = EvalModality::Left.apply(&clean_test);
    let topology = FusionTopology::halves_small(FusionScheme::Dmf);
    let mut improved = 0;
    for seed in 0..5u64 {
        let params =
            init_params(&topology, ModelVariant::EncoderDecoder, &mut Rng::new(seed), 0.05)
                .unwrap();
        let config = TrainConfig {
            epochs: 4,
            batch_size: 50,
            lr: 100.0,
            seed,
            variant: ModelVariant::EncoderDecoder,
            ..Default::default()
        };
        // Track the right-half test MSE epoch by epoch.
        let mut current = params;
        let mut first = None;
        let mut last = 0.0;
        for epoch in 0..config.epochs {
            let step = TrainConfig { epochs: 1, seed: config.seed.wrapping_add(epoch as u64), ..config };
            let (next, _) = finetune_encoder_decoder(
                current,
                &input_train,
                &clean_train,
                &input_test,
                &clean_test,
                &step,
            )
            .unwrap();
            current = next;
            let (_, right_mse) = reconstruction_mse(&current, &input_test, &clean_test).unwrap();
            if first.is_none() {
                first = Some(right_mse);
            }
            last = right_mse;
        }
        if last < first.unwrap() {
            improved += 1;
        }
    }
    assert!(improved >= 4, "right-half reconstruction improved on only {improved}/5 seeds");
}

#[test]
fn retrieval_places_true_counterparts_above_median() {
    // Train an encoder-decoder on full pairs (CD init, then fine-tune),
    // then query with right-only inputs against a left-only gallery of
    // the same pairs.
    let clean = halves_dataset(300, 76);
    let topology = FusionTopology::halves_small(FusionScheme::Dmf);
    let pre = PretrainConfig { epochs: 10, lr: 0.1, batch_size: 50, init_scale: 0.05 };
    let (params, _) =
        pretrain_stack(&topology, ModelVariant::EncoderDecoder, &clean, &pre, &mut Rng::new(12))
            .unwrap();
    let config = TrainConfig {
        epochs: 10,
        batch_size: 50,
        lr: 100.0,
        seed: 13,
        variant: ModelVariant::EncoderDecoder,
        ..Default::default()
    };
    let (trained, _) =
        finetune_encoder_decoder(params, &clean, &clean, &clean, &clean, &config).unwrap();
    let queries = EvalModality::Right.apply(&clean);
    let gallery = EvalModality::Left.apply(&clean);
    let ranked = encode_retrieval_demo(&trained, &queries, &gallery).unwrap();
    let n = clean.len();
    let above_median = ranked
        .iter()
        .enumerate()
        .filter(|(i, ranks)| ranks.iter().position(|&j| j == *i).unwrap() < n / 2)
        .count();
    assert!(
        above_median * 10 >= n * 8,
        "only {above_median}/{n} true pairs above median rank"
    );
}
