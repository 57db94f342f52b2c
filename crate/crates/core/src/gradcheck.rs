//! Finite-difference verification of every analytic gradient.
//!
//! For random tiny topologies of each scheme, three loss shapes are
//! checked: a fixed linear functional over the joint representation
//! (raw backward pass), the softmax-head cross-entropy (head chain),
//! and the encoder-decoder reconstruction loss (decoder chain). Every
//! parameter is perturbed both ways with a central difference and
//! compared at relative error |a - fd| / max(|a|, |fd|, 1e-8).

use std::collections::HashMap;

use crate::data::MultimodalBatch;
use crate::error::Result;
use crate::fusion::backward::{backward, backward_dmf_mutated};
use crate::fusion::decoder::{decode_backward, decode_forward};
use crate::fusion::forward::{forward, joint_representation};
use crate::fusion::params::{init_params, GradientSet, HeadParams, ParamSet};
use crate::fusion::topology::{FusionScheme, FusionTopology, ModelVariant};
use crate::numeric::{derive_seed, softmax_xent, Matrix, Rng};

#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    /// Number of random topologies per scheme.
    pub seeds: u64,
    /// Pass threshold on the worst relative error.
    pub tolerance: f64,
    /// Central-difference step.
    pub fd_step: f64,
    /// Test hook: flip the fusion-path term in the DMF backward pass to
    /// prove the suite catches it.
    pub inject_sign_flip: bool,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            seeds: 10,
            tolerance: 1e-5,
            fd_step: 1e-6,
            inject_sign_flip: false,
        }
    }
}

/// Worst observed deviation for one weight family.
///
/// The relative error is norm-wise per family: the largest
/// analytic-vs-FD deviation across the family's cells, divided by
/// max(|a|, |fd|, 1e-8) where |a| and |fd| are the family's gradient
/// magnitudes. A per-cell quotient would be dominated by f64
/// finite-difference rounding noise on cells whose true derivative is
/// near zero (the FD value of such a cell is noise of order
/// |loss| * 1e-16 / step regardless of the implementation under test),
/// while a genuine error inflates the family numerator by the gradient
/// scale itself.
#[derive(Debug, Clone)]
pub struct FamilyWorst {
    pub family: String,
    pub rel_err: f64,
    /// Location and values of the largest absolute deviation.
    pub matrix: String,
    pub row: usize,
    pub col: usize,
    pub analytic: f64,
    pub fd: f64,
    /// max(|a|, |fd|) over the family.
    pub scale: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub checks: usize,
    pub families: Vec<FamilyWorst>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.families.iter().all(|f| f.rel_err <= self.tolerance)
    }

    pub fn worst(&self) -> Option<&FamilyWorst> {
        self.families
            .iter()
            .max_by(|a, b| a.rel_err.partial_cmp(&b.rel_err).unwrap())
    }
}

/// Family label: the matrix name with level numbers stripped, so every
/// level of one weight family aggregates into one report row.
fn family_of(name: &str) -> String {
    name.chars().filter(|c| !c.is_ascii_digit()).collect()
}

fn random_topology(scheme: FusionScheme, rng: &mut Rng) -> FusionTopology {
    let width = |rng: &mut Rng| 2 + rng.below(5); // 2..=6
    let levels = 1 + rng.below(3); // 1..=3
    let n_classes = 3 + rng.below(3);
    match scheme {
        FusionScheme::Emf => {
            let depth = 1 + rng.below(3);
            FusionTopology::new(
                scheme,
                vec![width(rng)],
                vec![width(rng)],
                (0..depth).map(|_| width(rng)).collect(),
                n_classes,
            )
        }
        FusionScheme::Imf => FusionTopology::new(
            scheme,
            (0..=levels).map(|_| width(rng)).collect(),
            (0..=levels).map(|_| width(rng)).collect(),
            vec![width(rng)],
            n_classes,
        ),
        FusionScheme::Dmf => FusionTopology::new(
            scheme,
            (0..=levels).map(|_| width(rng)).collect(),
            (0..=levels).map(|_| width(rng)).collect(),
            (0..levels).map(|_| width(rng)).collect(),
            n_classes,
        ),
    }
    .expect("generated topologies are valid by construction")
}

fn random_batch(topology: &FusionTopology, rng: &mut Rng) -> MultimodalBatch {
    let n = 2 + rng.below(3);
    let left = Matrix::from_fn(n, topology.x_sizes[0], |_, _| rng.uniform());
    let right = Matrix::from_fn(n, topology.y_sizes[0], |_, _| rng.uniform());
    let mut labels = Matrix::zeros(n, topology.n_classes);
    for i in 0..n {
        let class = rng.below(topology.n_classes);
        labels.set(i, class, 1.0);
    }
    MultimodalBatch::new(left, right, labels).unwrap()
}

/// Random parameters with non-zero biases so bias gradients are
/// exercised away from the origin.
///
/// The weight scale is deliberately large for a sigmoid net: with small
/// weights, a gradient crossing the full encoder-decoder graph is
/// damped by a factor like (|w| sigma')^depth into the regime where the
/// f64 finite-difference oracle itself is pure rounding noise. Scale 2
/// keeps per-layer gains near 1 without saturating the units.
fn random_params(
    topology: &FusionTopology,
    variant: ModelVariant,
    rng: &mut Rng,
) -> Result<ParamSet> {
    let mut params = init_params(topology, variant, rng, 2.0)?;
    for (name, m) in params.matrices_mut() {
        if name.ends_with(".b") {
            for v in m.data_mut() {
                *v = rng.range(-0.5, 0.5);
            }
        }
    }
    Ok(params)
}

fn core_backward(params: &ParamSet, batch: &MultimodalBatch, grad_top: &Matrix, flip: bool) -> Result<GradientSet> {
    let trace = forward(params, batch)?;
    if flip && params.topology.scheme == FusionScheme::Dmf {
        backward_dmf_mutated(params, &trace, grad_top)
    } else {
        backward(params, &trace, grad_top)
    }
}

/// One loss shape: a scalar loss plus the matching analytic gradients.
struct LossCase<'a> {
    name: &'static str,
    loss: Box<dyn Fn(&ParamSet) -> Result<f64> + 'a>,
    analytic: GradientSet,
}

fn linear_case<'a>(
    params: &'a ParamSet,
    batch: &'a MultimodalBatch,
    probe: &'a Matrix,
    flip: bool,
) -> Result<LossCase<'a>> {
    let analytic = core_backward(params, batch, probe, flip)?;
    Ok(LossCase {
        name: "linear",
        loss: Box::new(move |p: &ParamSet| {
            let trace = forward(p, batch)?;
            let joint = joint_representation(&trace);
            Ok(joint
                .data()
                .iter()
                .zip(probe.data())
                .map(|(a, b)| a * b)
                .sum())
        }),
        analytic,
    })
}

fn discriminative_case<'a>(
    params: &'a ParamSet,
    batch: &'a MultimodalBatch,
    flip: bool,
) -> Result<LossCase<'a>> {
    let loss_fn = move |p: &ParamSet| -> Result<f64> {
        let trace = forward(p, batch)?;
        let HeadParams::Softmax(head) = &p.head else { unreachable!() };
        let logits = joint_representation(&trace)
            .matmul(&head.w)?
            .add_row_broadcast(&head.b)?;
        Ok(softmax_xent(&logits, &batch.labels)?.0)
    };
    let trace = forward(params, batch)?;
    let joint = joint_representation(&trace);
    let HeadParams::Softmax(head) = &params.head else { unreachable!() };
    let logits = joint.matmul(&head.w)?.add_row_broadcast(&head.b)?;
    let (_, grad_logits) = softmax_xent(&logits, &batch.labels)?;
    let grad_top = grad_logits.matmul(&head.w.transpose())?;
    let mut analytic = core_backward(params, batch, &grad_top, flip)?;
    let HeadParams::Softmax(ghead) = &mut analytic.0.head else { unreachable!() };
    ghead.w = joint.transpose().matmul(&grad_logits)?;
    ghead.b = grad_logits.col_sums();
    Ok(LossCase { name: "discriminative", loss: Box::new(loss_fn), analytic })
}

/// Half the summed squared reconstruction error. The training loop uses
/// the per-element mean; the check uses the sum so that gradients on
/// the deepest decoder-to-encoder paths stay well above the oracle's
/// f64 noise floor (the two differ by a constant factor only).
fn sse_half(recon: &Matrix, target: &Matrix) -> Result<(f64, Matrix)> {
    let diff = recon.sub(target)?;
    let loss = 0.5 * diff.data().iter().map(|d| d * d).sum::<f64>();
    Ok((loss, diff))
}

fn encdec_case<'a>(
    params: &'a ParamSet,
    batch: &'a MultimodalBatch,
    target: &'a MultimodalBatch,
    flip: bool,
) -> Result<LossCase<'a>> {
    let loss_fn = move |p: &ParamSet| -> Result<f64> {
        let trace = forward(p, batch)?;
        let dec = decode_forward(p, joint_representation(&trace))?;
        let (l, _) = sse_half(&dec.recon_x, &target.left)?;
        let (r, _) = sse_half(&dec.recon_y, &target.right)?;
        Ok(l + r)
    };
    let trace = forward(params, batch)?;
    let joint = joint_representation(&trace);
    let dec_trace = decode_forward(params, joint)?;
    let (_, grad_l) = sse_half(&dec_trace.recon_x, &target.left)?;
    let (_, grad_r) = sse_half(&dec_trace.recon_y, &target.right)?;
    let (dec_grads, grad_top) = decode_backward(params, joint, &dec_trace, &grad_l, &grad_r)?;
    let mut analytic = core_backward(params, batch, &grad_top, flip)?;
    analytic.0.head = HeadParams::Decoder(Box::new(dec_grads));
    Ok(LossCase { name: "encoder-decoder", loss: Box::new(loss_fn), analytic })
}

/// Running per-family aggregate: largest deviation and gradient scale.
#[derive(Debug, Clone, Default)]
struct FamilyAgg {
    max_dev: f64,
    matrix: String,
    row: usize,
    col: usize,
    analytic: f64,
    fd: f64,
    scale: f64,
}

fn check_case(
    params: &ParamSet,
    case: &LossCase<'_>,
    config: &GradCheckConfig,
    agg: &mut HashMap<String, FamilyAgg>,
    checks: &mut usize,
) -> Result<()> {
    let h = config.fd_step;
    let analytic = case.analytic.matrices();
    let mut work = params.clone();
    for (mi, (name, _)) in params.matrices().iter().enumerate() {
        let (rows, cols) = analytic[mi].1.shape();
        for r in 0..rows {
            for c in 0..cols {
                let original = {
                    let mats = work.matrices_mut();
                    let m = mats.into_iter().nth(mi).unwrap().1;
                    let v = m.get(r, c);
                    m.set(r, c, v + h);
                    v
                };
                let plus = (case.loss)(&work)?;
                {
                    let mats = work.matrices_mut();
                    let m = mats.into_iter().nth(mi).unwrap().1;
                    m.set(r, c, original - h);
                }
                let minus = (case.loss)(&work)?;
                {
                    let mats = work.matrices_mut();
                    let m = mats.into_iter().nth(mi).unwrap().1;
                    m.set(r, c, original);
                }
                let fd = (plus - minus) / (2.0 * h);
                let a = analytic[mi].1.get(r, c);
                *checks += 1;
                let family = format!("{} [{}]", family_of(name), case.name);
                let entry = agg.entry(family).or_default();
                entry.scale = entry.scale.max(a.abs()).max(fd.abs());
                let dev = (a - fd).abs();
                if dev > entry.max_dev {
                    entry.max_dev = dev;
                    entry.matrix = name.clone();
                    entry.row = r;
                    entry.col = c;
                    entry.analytic = a;
                    entry.fd = fd;
                }
            }
        }
    }
    Ok(())
}

/// Runs the whole suite: `seeds` random topologies per scheme, three
/// loss shapes each.
pub fn run_gradcheck(config: &GradCheckConfig) -> Result<GradCheckReport> {
    let mut agg: HashMap<String, FamilyAgg> = HashMap::new();
    let mut checks = 0usize;
    for (si, scheme) in [FusionScheme::Emf, FusionScheme::Imf, FusionScheme::Dmf]
        .into_iter()
        .enumerate()
    {
        for seed in 0..config.seeds {
            let mut rng = Rng::new(derive_seed(0xC4EC, (si as u64) << 32 | seed));
            let topology = random_topology(scheme, &mut rng);
            let batch = random_batch(&topology, &mut rng);
            // Probe entries bounded away from zero so the linear
            // functional never produces a degenerate top gradient.
            let probe = Matrix::from_fn(batch.len(), topology.joint_width(), |_, _| {
                let magnitude = rng.range(0.5, 1.5);
                if rng.bernoulli(0.5) { magnitude } else { -magnitude }
            });
            let target = {
                let left = Matrix::from_fn(batch.len(), topology.x_sizes[0], |_, _| rng.uniform());
                let right = Matrix::from_fn(batch.len(), topology.y_sizes[0], |_, _| rng.uniform());
                MultimodalBatch::new(left, right, batch.labels.clone()).unwrap()
            };

            let disc = random_params(&topology, ModelVariant::Discriminative, &mut rng)?;
            let case = linear_case(&disc, &batch, &probe, config.inject_sign_flip)?;
            check_case(&disc, &case, config, &mut agg, &mut checks)?;
            let case = discriminative_case(&disc, &batch, config.inject_sign_flip)?;
            check_case(&disc, &case, config, &mut agg, &mut checks)?;

            let encdec = random_params(&topology, ModelVariant::EncoderDecoder, &mut rng)?;
            let case = encdec_case(&encdec, &batch, &target, config.inject_sign_flip)?;
            check_case(&encdec, &case, config, &mut agg, &mut checks)?;
        }
    }
    let mut families: Vec<FamilyWorst> = agg
        .into_iter()
        .map(|(family, a)| FamilyWorst {
            family,
            rel_err: a.max_dev / a.scale.max(1e-8),
            matrix: a.matrix,
            row: a.row,
            col: a.col,
            analytic: a.analytic,
            fd: a.fd,
            scale: a.scale,
        })
        .collect();
    families.sort_by(|a, b| a.family.cmp(&b.family));
    Ok(GradCheckReport { tolerance: config.tolerance, checks, families })
}
