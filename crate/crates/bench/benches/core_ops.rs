//! Hot-path timings: the batched matrix product, one forward/backward
//! pass of each scheme at benchmark scale, and a CD-1 step.

use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use dmf_bench::bench_batch;
use dmf_core::fusion::backward::backward;
use dmf_core::fusion::forward::{forward, joint_representation};
use dmf_core::fusion::params::init_params;
use dmf_core::fusion::topology::{FusionScheme, FusionTopology, ModelVariant};
use dmf_core::numeric::{Matrix, Rng};
use dmf_core::pretrain::{cd1_update, RbmUnit};

fn bench_matmul(c: &mut Criterion) {
    let mut rng = Rng::new(1);
    let a = Matrix::from_fn(100, 392, |_, _| rng.uniform());
    let b = Matrix::from_fn(392, 512, |_, _| rng.range(-0.1, 0.1));
    c.bench_function("matmul 100x392 by 392x512", |bench| {
        bench.iter(|| black_box(a.matmul(&b).unwrap()))
    });
}

fn bench_forward_backward(c: &mut Criterion) {
    let batch = bench_batch(100, 2);
    for scheme in [FusionScheme::Emf, FusionScheme::Imf, FusionScheme::Dmf] {
        let topology = FusionTopology::halves_benchmark(scheme);
        let params =
            init_params(&topology, ModelVariant::Discriminative, &mut Rng::new(3), 0.05).unwrap();
        c.bench_function(&format!("forward {scheme} batch 100"), |bench| {
            bench.iter(|| black_box(forward(&params, &batch).unwrap()))
        });
        let trace = forward(&params, &batch).unwrap();
        let grad_top = Matrix::from_fn(100, topology.joint_width(), |_, _| 0.01);
        c.bench_function(&format!("backward {scheme} batch 100"), |bench| {
            bench.iter(|| black_box(backward(&params, &trace, &grad_top).unwrap()))
        });
        black_box(joint_representation(&trace));
    }
}

fn bench_cd1(c: &mut Criterion) {
    let mut rng = Rng::new(4);
    let visible = Matrix::from_fn(100, 392, |_, _| rng.uniform());
    let weights = Matrix::from_fn(392, 512, |_, _| rng.range(-0.05, 0.05));
    c.bench_function("cd1 392-visible 512-hidden batch 100", |bench| {
        bench.iter_batched(
            || (RbmUnit::new(vec![weights.clone()], Matrix::zeros(1, 512)), Rng::new(5)),
            |(mut unit, mut step_rng)| {
                black_box(cd1_update(&mut unit, &[&visible], 0.1, &mut step_rng).unwrap())
            },
            criterion::BatchSize::LargeInput,
        )
    });
}

criterion_group!(benches, bench_matmul, bench_forward_backward, bench_cd1);
criterion_main!(benches);
