//! Hand-derived backward passes for the three fusion schemes.
//!
//! Written against the recorded trace, so sigmoid derivatives come from
//! activations: sigma'(m) = s (1 - s). `grad_top` is the loss gradient
//! with respect to the top shared activation. Head and decoder
//! gradients are filled in by the training layer; these passes cover
//! the core fusion graph.

use crate::error::{Error, Result};
use crate::fusion::forward::ForwardTrace;
use crate::fusion::params::{CoreParams, DenseLayer, GradientSet, ParamSet};
use crate::fusion::topology::FusionScheme;
use crate::numeric::{sigmoid_prime_from_output, Matrix};

/// dW = input^T delta, db = column sums of delta, and the gradient
/// passed down to the layer input, delta W^T.
fn dense_backward(input: &Matrix, layer: &DenseLayer, delta: &Matrix) -> Result<(Matrix, Matrix, Matrix)> {
    let dw = input.transpose().matmul(delta)?;
    let db = delta.col_sums();
    let down = delta.matmul(&layer.w.transpose())?;
    Ok((dw, db, down))
}

fn check_trace(params: &ParamSet, trace: &ForwardTrace, grad_top: &Matrix) -> Result<()> {
    if trace.scheme != params.topology.scheme {
        return Err(Error::TraceMismatch(format!(
            "trace was produced by a {} forward pass, parameters are {}",
            trace.scheme, params.topology.scheme
        )));
    }
    let top = trace
        .shared
        .last()
        .ok_or_else(|| Error::TraceMismatch("trace has no shared layers".to_string()))?;
    if grad_top.shape() != top.shape() {
        return Err(Error::shape("grad_top", grad_top.shape(), top.shape()));
    }
    let t = &params.topology;
    let expected_shared = match t.scheme {
        FusionScheme::Emf => t.s_sizes.len(),
        FusionScheme::Imf => 1,
        FusionScheme::Dmf => t.levels(),
    };
    let expected_h = match t.scheme {
        FusionScheme::Emf => 0,
        _ => t.levels(),
    };
    if trace.shared.len() != expected_shared || trace.h_x.len() != expected_h || trace.h_y.len() != expected_h {
        return Err(Error::TraceMismatch(format!(
            "trace depth mismatch: {} shared / {} modality levels, expected {} / {}",
            trace.shared.len(),
            trace.h_x.len(),
            expected_shared,
            expected_h
        )));
    }
    Ok(())
}

/// Multi-path backward pass for dense fusion.
///
/// Shared chain: the error reaching shared level l is the level-(l+1)
/// pre-activation delta pushed through W_ss. Modality chain: the error
/// reaching h_l^x is the sum of the modality-path term (through
/// W_x[l+1]) and the fusion term (through W_xs[l], the transpose
/// realization of the shared-to-modality map); symmetric for y. Weight
/// gradients are activation-transposed-times-delta outer products.
pub fn backward_dmf(params: &ParamSet, trace: &ForwardTrace, grad_top: &Matrix) -> Result<GradientSet> {
    backward_dmf_impl(params, trace, grad_top, false)
}

/// Test hook: flips the sign of the fusion-path term in the modality
/// gradient so the finite-difference suite can prove it would catch
/// that mistake. Never use outside verification harnesses.
#[doc(hidden)]
pub fn backward_dmf_mutated(params: &ParamSet, trace: &ForwardTrace, grad_top: &Matrix) -> Result<GradientSet> {
    backward_dmf_impl(params, trace, grad_top, true)
}

fn backward_dmf_impl(
    params: &ParamSet,
    trace: &ForwardTrace,
    grad_top: &Matrix,
    flip_fusion_term: bool,
) -> Result<GradientSet> {
    check_trace(params, trace, grad_top)?;
    let CoreParams::Dmf { x_path, y_path, units } = &params.core else {
        return Err(Error::TraceMismatch("parameters are not a DMF model".to_string()));
    };
    let levels = units.len();
    let fusion_sign = if flip_fusion_term { -1.0 } else { 1.0 };

    // Shared-layer pre-activation deltas, top down.
    let mut delta_s: Vec<Matrix> = vec![Matrix::zeros(0, 0); levels];
    let mut grad_shared = grad_top.clone();
    for l in (1..=levels).rev() {
        let d = grad_shared.hadamard(&sigmoid_prime_from_output(&trace.shared[l - 1]))?;
        if l >= 2 {
            let w_ss = units[l - 1].w_ss.as_ref().expect("levels >= 2 carry w_ss");
            grad_shared = d.matmul(&w_ss.transpose())?;
        }
        delta_s[l - 1] = d;
    }

    // Modality pre-activation deltas, top down; each level sums the
    // fusion term and (below the top) the modality-path term.
    let modality_deltas = |path: &[DenseLayer], acts: &[Matrix], unit_w: &[&Matrix]| -> Result<Vec<Matrix>> {
        let mut deltas: Vec<Matrix> = vec![Matrix::zeros(0, 0); levels];
        for l in (1..=levels).rev() {
            let mut grad_h = delta_s[l - 1].matmul(&unit_w[l - 1].transpose())?.scale(fusion_sign);
            if l < levels {
                grad_h = grad_h.add(&deltas[l].matmul(&path[l].w.transpose())?)?;
            }
            deltas[l - 1] = grad_h.hadamard(&sigmoid_prime_from_output(&acts[l - 1]))?;
        }
        Ok(deltas)
    };
    let xs_weights: Vec<&Matrix> = units.iter().map(|u| &u.w_xs).collect();
    let ys_weights: Vec<&Matrix> = units.iter().map(|u| &u.w_ys).collect();
    let delta_x = modality_deltas(x_path, &trace.h_x, &xs_weights)?;
    let delta_y = modality_deltas(y_path, &trace.h_y, &ys_weights)?;

    let mut grads = GradientSet::zeros_like(params)?;
    let CoreParams::Dmf { x_path: gx, y_path: gy, units: gu } = &mut grads.0.core else {
        unreachable!("zeros_like preserves the scheme");
    };
    for l in 1..=levels {
        let below_x = if l == 1 { &trace.input_x } else { &trace.h_x[l - 2] };
        let below_y = if l == 1 { &trace.input_y } else { &trace.h_y[l - 2] };
        gx[l - 1].w = below_x.transpose().matmul(&delta_x[l - 1])?;
        gx[l - 1].b = delta_x[l - 1].col_sums();
        gy[l - 1].w = below_y.transpose().matmul(&delta_y[l - 1])?;
        gy[l - 1].b = delta_y[l - 1].col_sums();
        gu[l - 1].w_xs = trace.h_x[l - 1].transpose().matmul(&delta_s[l - 1])?;
        gu[l - 1].w_ys = trace.h_y[l - 1].transpose().matmul(&delta_s[l - 1])?;
        if l >= 2 {
            gu[l - 1].w_ss = Some(trace.shared[l - 2].transpose().matmul(&delta_s[l - 1])?);
        }
        gu[l - 1].b_s = delta_s[l - 1].col_sums();
    }
    Ok(grads)
}

/// Single-chain backward pass for intermediate fusion: through the top
/// shared layer, then down each modality stack.
pub fn backward_imf(params: &ParamSet, trace: &ForwardTrace, grad_top: &Matrix) -> Result<GradientSet> {
    check_trace(params, trace, grad_top)?;
    let CoreParams::Imf { x_path, y_path, .. } = &params.core else {
        return Err(Error::TraceMismatch("parameters are not an IMF model".to_string()));
    };
    let levels = x_path.len();
    let delta_s = grad_top.hadamard(&sigmoid_prime_from_output(&trace.shared[0]))?;

    let mut grads = GradientSet::zeros_like(params)?;
    let CoreParams::Imf { x_path: gx, y_path: gy, fuse: gf } = &mut grads.0.core else {
        unreachable!("zeros_like preserves the scheme");
    };
    let CoreParams::Imf { fuse, .. } = &params.core else { unreachable!() };
    gf.w_xs = trace.h_x[levels - 1].transpose().matmul(&delta_s)?;
    gf.w_ys = trace.h_y[levels - 1].transpose().matmul(&delta_s)?;
    gf.b_s = delta_s.col_sums();

    let chain = |path: &[DenseLayer],
                 acts: &[Matrix],
                 input: &Matrix,
                 top_grad: Matrix,
                 gpath: &mut [DenseLayer]|
     -> Result<()> {
        let mut grad_h = top_grad;
        for l in (1..=levels).rev() {
            let delta = grad_h.hadamard(&sigmoid_prime_from_output(&acts[l - 1]))?;
            let below = if l == 1 { input } else { &acts[l - 2] };
            let (dw, db, down) = dense_backward(below, &path[l - 1], &delta)?;
            gpath[l - 1].w = dw;
            gpath[l - 1].b = db;
            grad_h = down;
        }
        Ok(())
    };
    chain(x_path, &trace.h_x, &trace.input_x, delta_s.matmul(&fuse.w_xs.transpose())?, gx)?;
    chain(y_path, &trace.h_y, &trace.input_y, delta_s.matmul(&fuse.w_ys.transpose())?, gy)?;
    Ok(grads)
}

/// Standard stacked backprop for early fusion over the concatenated
/// input (rebuilt from the retained inputs; concatenation is exact).
pub fn backward_emf(params: &ParamSet, trace: &ForwardTrace, grad_top: &Matrix) -> Result<GradientSet> {
    check_trace(params, trace, grad_top)?;
    let CoreParams::Emf { stack } = &params.core else {
        return Err(Error::TraceMismatch("parameters are not an EMF model".to_string()));
    };
    let concat = Matrix::hstack(&trace.input_x, &trace.input_y)?;
    let mut grads = GradientSet::zeros_like(params)?;
    let CoreParams::Emf { stack: gstack } = &mut grads.0.core else {
        unreachable!("zeros_like preserves the scheme");
    };
    let mut grad = grad_top.clone();
    for l in (1..=stack.len()).rev() {
        let delta = grad.hadamard(&sigmoid_prime_from_output(&trace.shared[l - 1]))?;
        let below = if l == 1 { &concat } else { &trace.shared[l - 2] };
        let (dw, db, down) = dense_backward(below, &stack[l - 1], &delta)?;
        gstack[l - 1].w = dw;
        gstack[l - 1].b = db;
        grad = down;
    }
    Ok(grads)
}

/// Dispatches on the parameter set's scheme.
pub fn backward(params: &ParamSet, trace: &ForwardTrace, grad_top: &Matrix) -> Result<GradientSet> {
    match params.topology.scheme {
        FusionScheme::Emf => backward_emf(params, trace, grad_top),
        FusionScheme::Imf => backward_imf(params, trace, grad_top),
        FusionScheme::Dmf => backward_dmf(params, trace, grad_top),
    }
}
