//! Finite-difference oracles for every gradient path, plus the
//! structural decompositions of the multi-path backward pass.

use dmf_core::data::MultimodalBatch;
use dmf_core::fusion::backward::{backward, backward_dmf, backward_imf};
use dmf_core::fusion::forward::{forward, forward_dmf, forward_imf, joint_representation};
use dmf_core::fusion::params::{init_params, CoreParams, GradientSet, ParamSet};
use dmf_core::fusion::topology::{FusionScheme, FusionTopology, ModelVariant};
use dmf_core::gradcheck::{run_gradcheck, GradCheckConfig};
use dmf_core::numeric::{mse_loss, softmax_xent, Matrix, Rng};

fn batch(n: usize, in_x: usize, in_y: usize, seed: u64) -> MultimodalBatch {
    let mut rng = Rng::new(seed);
    let left = Matrix::from_fn(n, in_x, |_, _| rng.uniform());
    let right = Matrix::from_fn(n, in_y, |_, _| rng.uniform());
    let labels = Matrix::from_fn(n, 10, |i, j| if j == i % 10 { 1.0 } else { 0.0 });
    MultimodalBatch::new(left, right, labels).unwrap()
}

#[test]
fn softmax_xent_gradient_matches_finite_differences() {
    let mut rng = Rng::new(1);
    let logits = Matrix::from_fn(4, 3, |_, _| rng.range(-2.0, 2.0));
    let labels = Matrix::from_fn(4, 3, |i, j| if j == i % 3 { 1.0 } else { 0.0 });
    let (_, grad) = softmax_xent(&logits, &labels).unwrap();
    let h = 1e-6;
    for r in 0..4 {
        for c in 0..3 {
            let mut plus = logits.clone();
            plus.set(r, c, logits.get(r, c) + h);
            let mut minus = logits.clone();
            minus.set(r, c, logits.get(r, c) - h);
            let fd = (softmax_xent(&plus, &labels).unwrap().0
                - softmax_xent(&minus, &labels).unwrap().0)
                / (2.0 * h);
            let a = grad.get(r, c);
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-8);
            assert!(rel <= 1e-8, "logit ({r},{c}): analytic {a}, fd {fd}, rel {rel}");
        }
    }
}

#[test]
fn mse_gradient_matches_finite_differences() {
    let mut rng = Rng::new(2);
    let recon = Matrix::from_fn(3, 5, |_, _| rng.uniform());
    let target = Matrix::from_fn(3, 5, |_, _| rng.uniform());
    let (_, grad) = mse_loss(&recon, &target).unwrap();
    // The loss is quadratic, so the central difference has no
    // truncation term; a larger step only reduces rounding noise.
    let h = 1e-4;
    for r in 0..3 {
        for c in 0..5 {
            let mut plus = recon.clone();
            plus.set(r, c, recon.get(r, c) + h);
            let mut minus = recon.clone();
            minus.set(r, c, recon.get(r, c) - h);
            let fd =
                (mse_loss(&plus, &target).unwrap().0 - mse_loss(&minus, &target).unwrap().0) / (2.0 * h);
            let a = grad.get(r, c);
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-8);
            assert!(rel <= 1e-8, "({r},{c}): rel {rel}");
        }
    }
}

#[test]
fn full_suite_all_schemes_within_tolerance() {
    // The same harness cmd_gradcheck runs: random tiny topologies per
    // scheme, three loss shapes, every parameter checked centrally.
    let report = run_gradcheck(&GradCheckConfig { seeds: 4, ..Default::default() }).unwrap();
    let worst = report.worst().unwrap();
    assert!(
        report.passed(),
        "worst family {} at {:.3e}",
        worst.family,
        worst.rel_err
    );
}

/// Analytic gradient of the h-activation at one level, split into its
/// two summands: the modality-path term and the fusion-path term.
fn dmf_h_gradient_terms(
    params: &ParamSet,
    b: &MultimodalBatch,
    probe: &Matrix,
    level: usize, // 1-based, must be < levels
) -> (Matrix, Matrix) {
    let trace = forward_dmf(params, b).unwrap();
    let CoreParams::Dmf { x_path, units, .. } = &params.core else { unreachable!() };
    let levels = units.len();
    assert!(level < levels);

    // Shared-chain deltas, as in the backward pass.
    let sig = |s: &Matrix| s.map(|v| v * (1.0 - v));
    let mut delta_s = vec![Matrix::zeros(0, 0); levels];
    let mut grad_shared = probe.clone();
    for l in (1..=levels).rev() {
        let d = grad_shared.hadamard(&sig(&trace.shared[l - 1])).unwrap();
        if l >= 2 {
            grad_shared = d
                .matmul(&units[l - 1].w_ss.as_ref().unwrap().transpose())
                .unwrap();
        }
        delta_s[l - 1] = d;
    }
    // Modality-path deltas above the probed level.
    let mut delta_x = vec![Matrix::zeros(0, 0); levels];
    for l in (level + 1..=levels).rev() {
        let mut grad_h = delta_s[l - 1]
            .matmul(&units[l - 1].w_xs.transpose())
            .unwrap();
        if l < levels {
            grad_h = grad_h
                .add(&delta_x[l].matmul(&x_path[l].w.transpose()).unwrap())
                .unwrap();
        }
        delta_x[l - 1] = grad_h.hadamard(&sig(&trace.h_x[l - 1])).unwrap();
    }
    let modality_term = delta_x[level].matmul(&x_path[level].w.transpose()).unwrap();
    let fusion_term = delta_s[level - 1]
        .matmul(&units[level - 1].w_xs.transpose())
        .unwrap();
    (modality_term, fusion_term)
}

#[test]
fn multi_path_h_gradient_is_the_sum_of_its_two_terms() {
    // With two or more levels, the error reaching h_l^x is the
    // modality-path term plus the fusion-path term; each term alone
    // matches a finite-difference probe with the other path detached.
    let topology = FusionTopology::new(
        FusionScheme::Dmf,
        vec![4, 3, 3],
        vec![4, 3, 3],
        vec![3, 2],
        10,
    )
    .unwrap();
    let params =
        init_params(&topology, ModelVariant::Discriminative, &mut Rng::new(21), 1.2).unwrap();
    let b = batch(3, 4, 4, 22);
    let mut rng = Rng::new(23);
    let probe = Matrix::from_fn(3, 2, |_, _| rng.range(-1.0, 1.0));
    let level = 1usize;

    let (modality_term, fusion_term) = dmf_h_gradient_terms(&params, &b, &probe, level);
    let total = modality_term.add(&fusion_term).unwrap();

    // Finite differences with respect to the recorded activation: bump
    // h_l^x directly by editing the graph around it. Detaching a path
    // means zeroing the weights that carry it out of h_l^x.
    let loss_with_hx_offset = |p: &ParamSet, offset: &Matrix| -> f64 {
        // Recompute the forward pass but add `offset` to h_level^x.
        let CoreParams::Dmf { x_path, y_path, units } = &p.core else { unreachable!() };
        let mut hx = b.left.clone();
        let mut hy = b.right.clone();
        let mut shared_prev: Option<Matrix> = None;
        let mut joint = Matrix::zeros(0, 0);
        for l in 1..=units.len() {
            hx = dmf_core::numeric::sigmoid(
                &hx.matmul(&x_path[l - 1].w)
                    .unwrap()
                    .add_row_broadcast(&x_path[l - 1].b)
                    .unwrap(),
            );
            if l == level {
                hx = hx.add(offset).unwrap();
            }
            hy = dmf_core::numeric::sigmoid(
                &hy.matmul(&y_path[l - 1].w)
                    .unwrap()
                    .add_row_broadcast(&y_path[l - 1].b)
                    .unwrap(),
            );
            let mut pre = hx
                .matmul(&units[l - 1].w_xs)
                .unwrap()
                .add(&hy.matmul(&units[l - 1].w_ys).unwrap())
                .unwrap();
            if let Some(w_ss) = &units[l - 1].w_ss {
                pre = pre.add(&shared_prev.as_ref().unwrap().matmul(w_ss).unwrap()).unwrap();
            }
            let s = dmf_core::numeric::sigmoid(&pre.add_row_broadcast(&units[l - 1].b_s).unwrap());
            shared_prev = Some(s.clone());
            joint = s;
        }
        joint
            .data()
            .iter()
            .zip(probe.data())
            .map(|(a, b)| a * b)
            .sum()
    };

    let h = 1e-6;
    let fd_for = |p: &ParamSet, r: usize, c: usize| -> f64 {
        let mut offset = Matrix::zeros(3, 3);
        offset.set(r, c, h);
        let plus = loss_with_hx_offset(p, &offset);
        offset.set(r, c, -h);
        let minus = loss_with_hx_offset(p, &offset);
        (plus - minus) / (2.0 * h)
    };

    // Detached variants: cut the fusion edge at the probed level, or
    // cut the upward modality edge.
    let mut no_fusion = params.clone();
    {
        let CoreParams::Dmf { units, .. } = &mut no_fusion.core else { unreachable!() };
        units[level - 1].w_xs = Matrix::zeros(
            units[level - 1].w_xs.rows(),
            units[level - 1].w_xs.cols(),
        );
    }
    let mut no_modality = params.clone();
    {
        let CoreParams::Dmf { x_path, .. } = &mut no_modality.core else { unreachable!() };
        x_path[level].w = Matrix::zeros(x_path[level].w.rows(), x_path[level].w.cols());
    }
    // Terms recomputed on the detached graphs, then compared to the
    // full graph's summands (the detachment changes the graph from
    // h_l^x upward only for the cut edge, so the other term survives).
    let (mod_detached, _) = dmf_h_gradient_terms(&no_fusion, &b, &probe, level);
    let (_, fusion_detached) = dmf_h_gradient_terms(&no_modality, &b, &probe, level);

    for r in 0..3 {
        for c in 0..3 {
            let total_fd = fd_for(&params, r, c);
            let a = total.get(r, c);
            let rel = (a - total_fd).abs() / a.abs().max(total_fd.abs()).max(1e-8);
            assert!(rel <= 1e-5, "sum at ({r},{c}): {a} vs {total_fd}");

            let fd_mod = fd_for(&no_fusion, r, c);
            let am = mod_detached.get(r, c);
            let relm = (am - fd_mod).abs() / am.abs().max(fd_mod.abs()).max(1e-8);
            assert!(relm <= 1e-5, "modality term at ({r},{c}): {am} vs {fd_mod}");

            let fd_fuse = fd_for(&no_modality, r, c);
            let af = fusion_detached.get(r, c);
            let relf = (af - fd_fuse).abs() / af.abs().max(fd_fuse.abs()).max(1e-8);
            assert!(relf <= 1e-5, "fusion term at ({r},{c}): {af} vs {fd_fuse}");
        }
    }
}

#[test]
fn zero_shared_chain_backward_matches_imf_construction() {
    // Freeze the shared-to-shared weights at zero and mask their
    // gradients: the modality-path gradients must match a per-level
    // IMF-style construction, here realized by the IMF backward pass on
    // the same modality weights and top fusion unit.
    let mut rng = Rng::new(31);
    let topology = FusionTopology::new(
        FusionScheme::Dmf,
        vec![5, 4, 3],
        vec![5, 4, 3],
        vec![4, 3],
        10,
    )
    .unwrap();
    let mut dmf =
        init_params(&topology, ModelVariant::Discriminative, &mut rng, 0.8).unwrap();
    {
        let CoreParams::Dmf { units, .. } = &mut dmf.core else { unreachable!() };
        for unit in units.iter_mut() {
            if let Some(w_ss) = &mut unit.w_ss {
                *w_ss = Matrix::zeros(w_ss.rows(), w_ss.cols());
            }
        }
    }
    let imf_topology =
        FusionTopology::new(FusionScheme::Imf, vec![5, 4, 3], vec![5, 4, 3], vec![3], 10).unwrap();
    let mut imf = ParamSet::zeros(&imf_topology, ModelVariant::Discriminative).unwrap();
    {
        let CoreParams::Dmf { x_path, y_path, units } = &dmf.core else { unreachable!() };
        let CoreParams::Imf { x_path: ix, y_path: iy, fuse } = &mut imf.core else { unreachable!() };
        ix.clone_from_slice(x_path);
        iy.clone_from_slice(y_path);
        fuse.w_xs = units[1].w_xs.clone();
        fuse.w_ys = units[1].w_ys.clone();
        fuse.b_s = units[1].b_s.clone();
    }

    let b = batch(4, 5, 5, 33);
    let probe = Matrix::from_fn(4, 3, |_, _| rng.range(-1.0, 1.0));
    let dmf_grads = backward_dmf(&dmf, &forward_dmf(&dmf, &b).unwrap(), &probe).unwrap();
    let imf_grads = backward_imf(&imf, &forward_imf(&imf, &b).unwrap(), &probe).unwrap();

    let pick = |g: &GradientSet, prefix: &str| -> Vec<(String, Matrix)> {
        g.matrices()
            .into_iter()
            .filter(|(n, _)| n.starts_with(prefix))
            .map(|(n, m)| (n, m.clone()))
            .collect()
    };
    for prefix in ["x", "y"] {
        let a = pick(&dmf_grads, prefix);
        let o = pick(&imf_grads, prefix);
        assert_eq!(a.len(), o.len());
        for ((name, am), (_, om)) in a.iter().zip(&o) {
            assert!(
                am.max_abs_diff(om).unwrap() <= 1e-10,
                "{name} differs beyond 1e-10"
            );
        }
    }
}

#[test]
fn mutated_backward_fails_the_suite_loudly() {
    let report = run_gradcheck(&GradCheckConfig {
        seeds: 2,
        inject_sign_flip: true,
        ..Default::default()
    })
    .unwrap();
    assert!(!report.passed());
    let worst = report.worst().unwrap();
    assert!(worst.rel_err > 1e-2, "flip barely visible: {}", worst.rel_err);
}

#[test]
fn backward_dispatch_covers_all_schemes() {
    for scheme in [FusionScheme::Emf, FusionScheme::Imf, FusionScheme::Dmf] {
        let topology = match scheme {
            FusionScheme::Emf => {
                FusionTopology::new(scheme, vec![4], vec![4], vec![3, 2], 10).unwrap()
            }
            _ => FusionTopology::new(scheme, vec![4, 3], vec![4, 3], vec![2], 10).unwrap(),
        };
        let params =
            init_params(&topology, ModelVariant::Discriminative, &mut Rng::new(41), 0.5).unwrap();
        let b = batch(2, 4, 4, 42);
        let trace = forward(&params, &b).unwrap();
        let probe = Matrix::from_fn(2, joint_representation(&trace).cols(), |i, j| {
            0.3 * (i as f64 - 0.5) + 0.1 * j as f64
        });
        let grads = backward(&params, &trace, &probe).unwrap();
        assert!(grads.is_finite());
    }
}
