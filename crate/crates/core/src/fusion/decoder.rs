//! The mirrored decoder of the encoder-decoder variant.
//!
//! The decoder reverses every encoder edge with its own untied weight:
//! the shared chain runs downward, each level's modality activation is
//! generated from the same-level shared layer plus the level above, and
//! a final sigmoid layer emits each reconstructed modality in (0,1).
//! `decode_backward` returns the decoder gradients together with the
//! loss gradient at the joint representation, which then feeds the
//! encoder's backward pass.

use crate::error::{Error, Result};
use crate::fusion::params::{DecoderParams, DecoderPathway, DenseLayer, HeadParams, ParamSet};
use crate::fusion::topology::FusionScheme;
use crate::numeric::{sigmoid, sigmoid_prime_from_output, Matrix};

/// Activations recorded while decoding.
#[derive(Debug, Clone)]
pub struct DecoderTrace {
    scheme: FusionScheme,
    /// Downward shared chain (DMF only); the last entry is the joint.
    s_hat: Vec<Matrix>,
    /// Modality activations: DMF per-level generations, IMF/EMF chain
    /// intermediates before the output layer.
    a_x: Vec<Matrix>,
    a_y: Vec<Matrix>,
    pub recon_x: Matrix,
    pub recon_y: Matrix,
}

fn dense(input: &Matrix, layer: &DenseLayer) -> Result<Matrix> {
    Ok(sigmoid(&input.matmul(&layer.w)?.add_row_broadcast(&layer.b)?))
}

fn decoder_of(params: &ParamSet) -> Result<&DecoderParams> {
    match &params.head {
        HeadParams::Decoder(d) => Ok(d),
        HeadParams::Softmax(_) => Err(Error::InvalidConfig(
            "model has a softmax head, not a decoder".to_string(),
        )),
    }
}

/// Reconstructs both modalities from the joint representation.
pub fn decode_forward(params: &ParamSet, joint: &Matrix) -> Result<DecoderTrace> {
    let decoder = decoder_of(params)?;
    if joint.cols() != params.topology.joint_width() {
        return Err(Error::shape("decode_forward", joint.shape(), (joint.rows(), params.topology.joint_width())));
    }
    match decoder {
        DecoderParams::Emf { stack } => {
            let mut acts: Vec<Matrix> = Vec::new();
            let mut current = joint;
            for layer in &stack[..stack.len() - 1] {
                acts.push(dense(current, layer)?);
                current = acts.last().unwrap();
            }
            let full = dense(current, stack.last().expect("non-empty decoder"))?;
            let in_x = params.topology.x_sizes[0];
            let left_cols: Vec<usize> = (0..in_x).collect();
            let right_cols: Vec<usize> = (in_x..full.cols()).collect();
            Ok(DecoderTrace {
                scheme: FusionScheme::Emf,
                s_hat: Vec::new(),
                recon_x: full.select_cols(&left_cols),
                recon_y: full.select_cols(&right_cols),
                a_x: acts,
                a_y: Vec::new(),
            })
        }
        DecoderParams::Imf { x_chain, y_chain } => {
            let run = |chain: &[DenseLayer]| -> Result<(Vec<Matrix>, Matrix)> {
                let mut acts: Vec<Matrix> = Vec::new();
                let mut current = joint;
                for layer in &chain[..chain.len() - 1] {
                    acts.push(dense(current, layer)?);
                    current = acts.last().unwrap();
                }
                let recon = dense(current, chain.last().expect("non-empty chain"))?;
                Ok((acts, recon))
            };
            let (a_x, recon_x) = run(x_chain)?;
            let (a_y, recon_y) = run(y_chain)?;
            Ok(DecoderTrace {
                scheme: FusionScheme::Imf,
                s_hat: Vec::new(),
                a_x,
                a_y,
                recon_x,
                recon_y,
            })
        }
        DecoderParams::Dmf { s_chain, x, y } => {
            let levels = x.from_s.len();
            // Shared chain downward; index l-1 holds level l.
            let mut s_hat = vec![Matrix::zeros(0, 0); levels];
            s_hat[levels - 1] = joint.clone();
            for l in (1..levels).rev() {
                s_hat[l - 1] = dense(&s_hat[l], &s_chain[l - 1])?;
            }
            let run = |pw: &DecoderPathway| -> Result<(Vec<Matrix>, Matrix)> {
                let mut acts = vec![Matrix::zeros(0, 0); levels];
                for l in (1..=levels).rev() {
                    let mut pre = s_hat[l - 1].matmul(&pw.from_s[l - 1].w)?;
                    if l < levels {
                        pre = pre.add(&acts[l].matmul(&pw.from_h[l - 1])?)?;
                    }
                    acts[l - 1] = sigmoid(&pre.add_row_broadcast(&pw.from_s[l - 1].b)?);
                }
                let recon = dense(&acts[0], &pw.out)?;
                Ok((acts, recon))
            };
            let (a_x, recon_x) = run(x)?;
            let (a_y, recon_y) = run(y)?;
            Ok(DecoderTrace {
                scheme: FusionScheme::Dmf,
                s_hat,
                a_x,
                a_y,
                recon_x,
                recon_y,
            })
        }
    }
}

/// Backpropagates reconstruction-loss gradients through the decoder.
///
/// Returns decoder-shaped gradients and the loss gradient with respect
/// to the joint representation (ready for the encoder backward pass).
pub fn decode_backward(
    params: &ParamSet,
    joint: &Matrix,
    trace: &DecoderTrace,
    grad_recon_x: &Matrix,
    grad_recon_y: &Matrix,
) -> Result<(DecoderParams, Matrix)> {
    let decoder = decoder_of(params)?;
    if trace.scheme != params.topology.scheme {
        return Err(Error::TraceMismatch(format!(
            "decoder trace is {}, parameters are {}",
            trace.scheme, params.topology.scheme
        )));
    }
    match decoder {
        DecoderParams::Emf { stack } => {
            let grad_full = Matrix::hstack(grad_recon_x, grad_recon_y)?;
            let full = Matrix::hstack(&trace.recon_x, &trace.recon_y)?;
            let mut gstack: Vec<DenseLayer> = stack
                .iter()
                .map(|l| DenseLayer { w: Matrix::zeros(l.w.rows(), l.w.cols()), b: Matrix::zeros(1, l.b.cols()) })
                .collect();
            let mut grad = grad_full;
            let mut act = &full;
            for k in (0..stack.len()).rev() {
                let delta = grad.hadamard(&sigmoid_prime_from_output(act))?;
                let below = if k == 0 { joint } else { &trace.a_x[k - 1] };
                gstack[k].w = below.transpose().matmul(&delta)?;
                gstack[k].b = delta.col_sums();
                grad = delta.matmul(&stack[k].w.transpose())?;
                if k > 0 {
                    act = &trace.a_x[k - 1];
                }
            }
            Ok((DecoderParams::Emf { stack: gstack }, grad))
        }
        DecoderParams::Imf { x_chain, y_chain } => {
            let run = |chain: &[DenseLayer], acts: &[Matrix], recon: &Matrix, grad_recon: &Matrix| -> Result<(Vec<DenseLayer>, Matrix)> {
                let mut gchain: Vec<DenseLayer> = chain
                    .iter()
                    .map(|l| DenseLayer { w: Matrix::zeros(l.w.rows(), l.w.cols()), b: Matrix::zeros(1, l.b.cols()) })
                    .collect();
                let mut grad = grad_recon.clone();
                let mut act = recon;
                for k in (0..chain.len()).rev() {
                    let delta = grad.hadamard(&sigmoid_prime_from_output(act))?;
                    let below = if k == 0 { joint } else { &acts[k - 1] };
                    gchain[k].w = below.transpose().matmul(&delta)?;
                    gchain[k].b = delta.col_sums();
                    grad = delta.matmul(&chain[k].w.transpose())?;
                    if k > 0 {
                        act = &acts[k - 1];
                    }
                }
                Ok((gchain, grad))
            };
            let (gx, joint_grad_x) = run(x_chain, &trace.a_x, &trace.recon_x, grad_recon_x)?;
            let (gy, joint_grad_y) = run(y_chain, &trace.a_y, &trace.recon_y, grad_recon_y)?;
            Ok((
                DecoderParams::Imf { x_chain: gx, y_chain: gy },
                joint_grad_x.add(&joint_grad_y)?,
            ))
        }
        DecoderParams::Dmf { s_chain, x, y } => {
            let levels = x.from_s.len();
            let zero_pathway = |pw: &DecoderPathway| DecoderPathway {
                from_s: pw
                    .from_s
                    .iter()
                    .map(|l| DenseLayer { w: Matrix::zeros(l.w.rows(), l.w.cols()), b: Matrix::zeros(1, l.b.cols()) })
                    .collect(),
                from_h: pw.from_h.iter().map(|m| Matrix::zeros(m.rows(), m.cols())).collect(),
                out: DenseLayer {
                    w: Matrix::zeros(pw.out.w.rows(), pw.out.w.cols()),
                    b: Matrix::zeros(1, pw.out.b.cols()),
                },
            };
            let mut gx = zero_pathway(x);
            let mut gy = zero_pathway(y);
            let n = joint.rows();
            let mut grad_s: Vec<Matrix> = (0..levels)
                .map(|i| Matrix::zeros(n, trace.s_hat[i].cols()))
                .collect();

            // One modality pathway: output layer first, then levels
            // bottom-up so each level's gradient is complete before it
            // pushes into the level above and the shared chain.
            let run = |pw: &DecoderPathway,
                           gpw: &mut DecoderPathway,
                           acts: &[Matrix],
                           recon: &Matrix,
                           grad_recon: &Matrix,
                           grad_s: &mut Vec<Matrix>|
             -> Result<()> {
                let delta_out = grad_recon.hadamard(&sigmoid_prime_from_output(recon))?;
                gpw.out.w = acts[0].transpose().matmul(&delta_out)?;
                gpw.out.b = delta_out.col_sums();
                let mut grad_h: Vec<Matrix> = (0..levels)
                    .map(|i| Matrix::zeros(n, acts[i].cols()))
                    .collect();
                grad_h[0] = delta_out.matmul(&pw.out.w.transpose())?;
                for l in 1..=levels {
                    let delta = grad_h[l - 1].hadamard(&sigmoid_prime_from_output(&acts[l - 1]))?;
                    gpw.from_s[l - 1].w = trace.s_hat[l - 1].transpose().matmul(&delta)?;
                    gpw.from_s[l - 1].b = delta.col_sums();
                    grad_s[l - 1] = grad_s[l - 1].add(&delta.matmul(&pw.from_s[l - 1].w.transpose())?)?;
                    if l < levels {
                        gpw.from_h[l - 1] = acts[l].transpose().matmul(&delta)?;
                        grad_h[l] = grad_h[l].add(&delta.matmul(&pw.from_h[l - 1].transpose())?)?;
                    }
                }
                Ok(())
            };
            run(x, &mut gx, &trace.a_x, &trace.recon_x, grad_recon_x, &mut grad_s)?;
            run(y, &mut gy, &trace.a_y, &trace.recon_y, grad_recon_y, &mut grad_s)?;

            // Shared chain bottom-up; the top entry is the joint, whose
            // sigmoid belongs to the encoder, so no derivative here.
            let mut gs_chain: Vec<DenseLayer> = s_chain
                .iter()
                .map(|l| DenseLayer { w: Matrix::zeros(l.w.rows(), l.w.cols()), b: Matrix::zeros(1, l.b.cols()) })
                .collect();
            for l in 1..levels {
                let delta = grad_s[l - 1].hadamard(&sigmoid_prime_from_output(&trace.s_hat[l - 1]))?;
                gs_chain[l - 1].w = trace.s_hat[l].transpose().matmul(&delta)?;
                gs_chain[l - 1].b = delta.col_sums();
                let up = delta.matmul(&s_chain[l - 1].w.transpose())?;
                grad_s[l] = grad_s[l].add(&up)?;
            }
            let grad_joint = grad_s.pop().expect("levels >= 1");
            Ok((DecoderParams::Dmf { s_chain: gs_chain, x: gx, y: gy }, grad_joint))
        }
    }
}
