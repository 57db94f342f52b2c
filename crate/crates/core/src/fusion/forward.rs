//! Forward passes for the three fusion schemes.
//!
//! Batches are row-major (samples as rows), so a layer computes
//! sigmoid(H W + b) with `w` input-by-output. The trace keeps every
//! activation and the shared-layer pre-activations; the backward passes
//! and the pretrainer both feed off it.

use crate::data::MultimodalBatch;
use crate::error::{Error, Result};
use crate::fusion::params::{CoreParams, DenseLayer, ParamSet};
use crate::fusion::topology::FusionScheme;
use crate::numeric::{sigmoid, Matrix};

/// Per-layer activations recorded during a forward pass.
///
/// `shared[l]` holds the shared activations with `pre[l]` the matching
/// pre-activations; for EMF these are the stacked layers over the
/// concatenated input. `h_x`/`h_y` are the modality pathway activations
/// (empty for EMF). Inputs are retained for the weight gradients.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub scheme: FusionScheme,
    pub input_x: Matrix,
    pub input_y: Matrix,
    pub h_x: Vec<Matrix>,
    pub h_y: Vec<Matrix>,
    pub shared: Vec<Matrix>,
    pub pre: Vec<Matrix>,
}

/// The top shared activation: what the classifier head or decoder sees.
pub fn joint_representation(trace: &ForwardTrace) -> &Matrix {
    trace.shared.last().expect("trace always has a top layer")
}

fn affine(input: &Matrix, layer: &DenseLayer) -> Result<Matrix> {
    input.matmul(&layer.w)?.add_row_broadcast(&layer.b)
}

/// sigmoid(input W + b)
fn dense_forward(input: &Matrix, layer: &DenseLayer) -> Result<Matrix> {
    Ok(sigmoid(&affine(input, layer)?))
}

fn check_batch(params: &ParamSet, batch: &MultimodalBatch) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::InvalidConfig("empty batch".to_string()));
    }
    let t = &params.topology;
    if batch.left.cols() != t.x_sizes[0] || batch.right.cols() != t.y_sizes[0] {
        return Err(Error::shape(
            "forward input widths",
            batch.left.shape(),
            batch.right.shape(),
        ));
    }
    Ok(())
}

/// Runs the modality pathway: h_l = sigmoid(W_l h_{l-1} + b_l).
fn run_path(input: &Matrix, path: &[DenseLayer]) -> Result<Vec<Matrix>> {
    let mut acts = Vec::with_capacity(path.len());
    let mut current = input;
    for layer in path {
        let next = dense_forward(current, layer)?;
        acts.push(next);
        current = acts.last().unwrap();
    }
    Ok(acts)
}

/// Dense fusion forward pass.
///
/// Level 1 fuses the first modality activations with no predecessor
/// term: s_1 = sigmoid(W_xs1 h_1^x + W_ys1 h_1^y + b_1). Every later
/// level adds the incoming shared edge:
/// s_l = sigmoid(W_xsl h_l^x + W_ysl h_l^y + W_ss(l-1) s_{l-1} + b_l).
pub fn forward_dmf(params: &ParamSet, batch: &MultimodalBatch) -> Result<ForwardTrace> {
    check_batch(params, batch)?;
    let CoreParams::Dmf { x_path, y_path, units } = &params.core else {
        return Err(Error::TraceMismatch("parameters are not a DMF model".to_string()));
    };
    let h_x = run_path(&batch.left, x_path)?;
    let h_y = run_path(&batch.right, y_path)?;
    let mut shared: Vec<Matrix> = Vec::with_capacity(units.len());
    let mut pre = Vec::with_capacity(units.len());
    for (i, unit) in units.iter().enumerate() {
        let mut m = h_x[i].matmul(&unit.w_xs)?.add(&h_y[i].matmul(&unit.w_ys)?)?;
        if let Some(w_ss) = &unit.w_ss {
            m = m.add(&shared[i - 1].matmul(w_ss)?)?;
        }
        let m = m.add_row_broadcast(&unit.b_s)?;
        shared.push(sigmoid(&m));
        pre.push(m);
    }
    Ok(ForwardTrace {
        scheme: FusionScheme::Dmf,
        input_x: batch.left.clone(),
        input_y: batch.right.clone(),
        h_x,
        h_y,
        shared,
        pre,
    })
}

/// Intermediate fusion forward pass: full modality pathways, then one
/// shared layer s = sigmoid(W_xs h_L^x + W_ys h_L^y + b) at the top.
pub fn forward_imf(params: &ParamSet, batch: &MultimodalBatch) -> Result<ForwardTrace> {
    check_batch(params, batch)?;
    let CoreParams::Imf { x_path, y_path, fuse } = &params.core else {
        return Err(Error::TraceMismatch("parameters are not an IMF model".to_string()));
    };
    let h_x = run_path(&batch.left, x_path)?;
    let h_y = run_path(&batch.right, y_path)?;
    let top_x = h_x.last().expect("IMF has at least one level");
    let top_y = h_y.last().expect("IMF has at least one level");
    let m = top_x
        .matmul(&fuse.w_xs)?
        .add(&top_y.matmul(&fuse.w_ys)?)?
        .add_row_broadcast(&fuse.b_s)?;
    Ok(ForwardTrace {
        scheme: FusionScheme::Imf,
        input_x: batch.left.clone(),
        input_y: batch.right.clone(),
        h_x,
        h_y,
        shared: vec![sigmoid(&m)],
        pre: vec![m],
    })
}

/// Early fusion forward pass: left-then-right concatenation, then the
/// shared stack z_l = sigmoid(W_l z_{l-1} + b_l).
pub fn forward_emf(params: &ParamSet, batch: &MultimodalBatch) -> Result<ForwardTrace> {
    check_batch(params, batch)?;
    let CoreParams::Emf { stack } = &params.core else {
        return Err(Error::TraceMismatch("parameters are not an EMF model".to_string()));
    };
    let concat = Matrix::hstack(&batch.left, &batch.right)?;
    let mut shared = Vec::with_capacity(stack.len());
    let mut pre = Vec::with_capacity(stack.len());
    let mut current = &concat;
    for layer in stack {
        let m = affine(current, layer)?;
        shared.push(sigmoid(&m));
        pre.push(m);
        current = shared.last().unwrap();
    }
    Ok(ForwardTrace {
        scheme: FusionScheme::Emf,
        input_x: batch.left.clone(),
        input_y: batch.right.clone(),
        h_x: Vec::new(),
        h_y: Vec::new(),
        shared,
        pre,
    })
}

/// Dispatches on the parameter set's scheme.
pub fn forward(params: &ParamSet, batch: &MultimodalBatch) -> Result<ForwardTrace> {
    match params.topology.scheme {
        FusionScheme::Emf => forward_emf(params, batch),
        FusionScheme::Imf => forward_imf(params, batch),
        FusionScheme::Dmf => forward_dmf(params, batch),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::params::init_params;
    use crate::fusion::topology::{FusionTopology, ModelVariant};
    use crate::numeric::Rng;

    fn batch(n: usize, in_x: usize, in_y: usize, seed: u64) -> MultimodalBatch {
        let mut rng = Rng::new(seed);
        let left = Matrix::from_fn(n, in_x, |_, _| rng.uniform());
        let right = Matrix::from_fn(n, in_y, |_, _| rng.uniform());
        let labels = Matrix::from_fn(n, 10, |i, j| if j == i % 10 { 1.0 } else { 0.0 });
        MultimodalBatch::new(left, right, labels).unwrap()
    }

    #[test]
    fn zero_params_give_half_activations_everywhere() {
        for scheme in [FusionScheme::Emf, FusionScheme::Imf, FusionScheme::Dmf] {
            let topology = FusionTopology::halves_small(scheme);
            let params = ParamSet::zeros(&topology, ModelVariant::Discriminative).unwrap();
            let trace = forward(&params, &batch(3, 392, 392, 1)).unwrap();
            for s in trace.shared.iter().chain(&trace.h_x).chain(&trace.h_y) {
                assert!(s.data().iter().all(|&v| v == 0.5));
            }
        }
    }

    #[test]
    fn all_activations_stay_in_open_unit_interval() {
        let topology =
            FusionTopology::new(FusionScheme::Dmf, vec![5, 4, 3], vec![5, 4, 3], vec![4, 2], 10)
                .unwrap();
        let params =
            init_params(&topology, ModelVariant::Discriminative, &mut Rng::new(2), 2.0).unwrap();
        let trace = forward_dmf(&params, &batch(4, 5, 5, 3)).unwrap();
        for m in trace.shared.iter().chain(&trace.h_x).chain(&trace.h_y) {
            assert!(m.data().iter().all(|&v| v > 0.0 && v < 1.0));
        }
        // shared[l] == sigmoid(pre[l]) exactly, by construction.
        for (s, p) in trace.shared.iter().zip(&trace.pre) {
            assert!(s.max_abs_diff(&sigmoid(p)).unwrap() <= 1e-15);
        }
    }

    #[test]
    fn empty_batch_is_rejected() {
        let topology = FusionTopology::halves_small(FusionScheme::Dmf);
        let params = ParamSet::zeros(&topology, ModelVariant::Discriminative).unwrap();
        let empty = MultimodalBatch::new(
            Matrix::zeros(0, 392),
            Matrix::zeros(0, 392),
            Matrix::zeros(0, 10),
        )
        .unwrap();
        assert!(forward(&params, &empty).is_err());
    }

    #[test]
    fn joint_representation_is_top_shared_layer() {
        let topology = FusionTopology::halves_small(FusionScheme::Dmf);
        let params =
            init_params(&topology, ModelVariant::Discriminative, &mut Rng::new(4), 0.05).unwrap();
        let trace = forward_dmf(&params, &batch(2, 392, 392, 5)).unwrap();
        assert_eq!(joint_representation(&trace).cols(), 48);
        let again = forward_dmf(&params, &batch(2, 392, 392, 5)).unwrap();
        assert_eq!(joint_representation(&trace), joint_representation(&again));
    }
}
