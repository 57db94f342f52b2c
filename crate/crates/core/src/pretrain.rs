//! Layer-wise generative initialization with CD-1.
//!
//! Every layer of the fusion graph is trained greedily bottom-up as an
//! RBM-style unit. A multimodal unit's visible layer is the
//! concatenation of blocks: the two same-level modality activations,
//! plus the previous shared layer when there is one, so the
//! shared-to-shared weights are pretrained generatively too. Visible
//! units are real-valued in [0,1] and treated as probabilities; hidden
//! units are binary, sampled only for the Gibbs reconstruction step,
//! with probabilities used in all statistics. Visible biases exist only
//! while a unit trains; the feed-forward net keeps weights and hidden
//! biases.

use crate::data::MultimodalBatch;
use crate::error::{Error, Result};
use crate::fusion::params::{init_params, CoreParams, ParamSet};
use crate::fusion::topology::{FusionTopology, ModelVariant};
use crate::numeric::{sigmoid, Matrix, Rng};

/// One RBM-style unit with block-structured visible layer.
///
/// `weights[k]` maps visible block k (rows) to the hidden layer (cols).
#[derive(Debug, Clone, PartialEq)]
pub struct RbmUnit {
    pub weights: Vec<Matrix>,
    pub vis_bias: Vec<Matrix>,
    pub hid_bias: Matrix,
}

impl RbmUnit {
    pub fn new(weights: Vec<Matrix>, hid_bias: Matrix) -> Self {
        let vis_bias = weights.iter().map(|w| Matrix::zeros(1, w.rows())).collect();
        RbmUnit { weights, vis_bias, hid_bias }
    }

    fn hidden_probabilities(&self, visible: &[&Matrix]) -> Result<Matrix> {
        let mut pre = visible[0].matmul(&self.weights[0])?;
        for (v, w) in visible.iter().zip(&self.weights).skip(1) {
            pre = pre.add(&v.matmul(w)?)?;
        }
        Ok(sigmoid(&pre.add_row_broadcast(&self.hid_bias)?))
    }
}

/// One CD-1 step on a batch of visible blocks.
///
/// Positive phase: hidden probabilities from the data, then a Bernoulli
/// hidden sample. Negative phase: visible reconstruction probabilities
/// from the sample, then hidden probabilities of the reconstruction.
/// The update is lr * (<v h>_data - <v h>_recon) / batch; biases move
/// by the matching visible and hidden statistics. Returns the mean
/// squared visible reconstruction error. lr = 0 leaves the unit
/// unchanged (the Gibbs chain still consumes the RNG).
pub fn cd1_update(
    unit: &mut RbmUnit,
    visible_blocks: &[&Matrix],
    lr: f64,
    rng: &mut Rng,
) -> Result<f64> {
    if lr < 0.0 {
        return Err(Error::InvalidConfig(format!("negative CD learning rate {lr}")));
    }
    if visible_blocks.len() != unit.weights.len() {
        return Err(Error::InvalidConfig(format!(
            "{} visible blocks for a unit with {} weight blocks",
            visible_blocks.len(),
            unit.weights.len()
        )));
    }
    let n = visible_blocks[0].rows();
    for (k, v) in visible_blocks.iter().enumerate() {
        if v.rows() != n || v.cols() != unit.weights[k].rows() {
            return Err(Error::shape("cd1_update visible block", v.shape(), unit.weights[k].shape()));
        }
        if v.data().iter().any(|&x| !(0.0..=1.0).contains(&x)) {
            return Err(Error::InvalidConfig(format!(
                "visible block {k} has values outside [0,1]"
            )));
        }
    }

    let ph0 = unit.hidden_probabilities(visible_blocks)?;
    let mut h0 = ph0.clone();
    for v in h0.data_mut() {
        *v = if rng.bernoulli(*v) { 1.0 } else { 0.0 };
    }
    let recon: Vec<Matrix> = unit
        .weights
        .iter()
        .zip(&unit.vis_bias)
        .map(|(w, vb)| Ok(sigmoid(&h0.matmul(&w.transpose())?.add_row_broadcast(vb)?)))
        .collect::<Result<_>>()?;
    let recon_refs: Vec<&Matrix> = recon.iter().collect();
    let ph1 = unit.hidden_probabilities(&recon_refs)?;

    let mut sq_err = 0.0;
    let mut count = 0usize;
    for (v, pv) in visible_blocks.iter().zip(&recon) {
        for (a, b) in v.data().iter().zip(pv.data()) {
            let d = a - b;
            sq_err += d * d;
        }
        count += v.rows() * v.cols();
    }
    let recon_error = sq_err / count as f64;

    if lr != 0.0 {
        let scale = lr / n as f64;
        for (k, v) in visible_blocks.iter().enumerate() {
            let positive = v.transpose().matmul(&ph0)?;
            let negative = recon[k].transpose().matmul(&ph1)?;
            unit.weights[k].scaled_add_assign(scale, &positive.sub(&negative)?)?;
            unit.vis_bias[k].scaled_add_assign(scale, &v.col_sums().sub(&recon[k].col_sums())?)?;
        }
        unit.hid_bias
            .scaled_add_assign(scale, &ph0.col_sums().sub(&ph1.col_sums())?)?;
    }
    Ok(recon_error)
}

/// Knobs for the layer-wise pretraining pass.
#[derive(Debug, Clone, Copy)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub init_scale: f64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig { epochs: 0, lr: 0.1, batch_size: 100, init_scale: 0.05 }
    }
}

/// Per-unit reconstruction-error curve (one mean per epoch).
#[derive(Debug, Clone)]
pub struct UnitReport {
    pub name: String,
    pub recon_errors: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct PretrainReport {
    pub units: Vec<UnitReport>,
}

/// Trains one unit over the dataset and writes the result back through
/// `commit`. Minibatches are sequential slices; the hidden sampling is
/// the only stochastic part.
fn train_unit(
    name: &str,
    mut unit: RbmUnit,
    blocks: &[&Matrix],
    config: &PretrainConfig,
    rng: &mut Rng,
    report: &mut PretrainReport,
) -> Result<RbmUnit> {
    let n = blocks[0].rows();
    let batch = config.batch_size.max(1);
    let mut curve = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        let mut sq_sum = 0.0;
        let mut seen = 0usize;
        let mut start = 0;
        while start < n {
            let end = (start + batch).min(n);
            let rows: Vec<usize> = (start..end).collect();
            let views: Vec<Matrix> = blocks.iter().map(|b| b.select_rows(&rows)).collect();
            let refs: Vec<&Matrix> = views.iter().collect();
            let err = cd1_update(&mut unit, &refs, config.lr, rng)?;
            sq_sum += err * (end - start) as f64;
            seen += end - start;
            start = end;
        }
        curve.push(sq_sum / seen as f64);
    }
    report.units.push(UnitReport { name: name.to_string(), recon_errors: curve });
    Ok(unit)
}

/// Greedy bottom-up initialization of a full parameter set.
///
/// Level-1 modality layers train on the raw inputs; each shared unit
/// trains on the activation probabilities propagated from the already
/// trained layers below it. Heads (softmax or decoder) keep their
/// random initialization. With 0 epochs this is exactly
/// [`init_params`].
pub fn pretrain_stack(
    topology: &FusionTopology,
    variant: ModelVariant,
    data: &MultimodalBatch,
    config: &PretrainConfig,
    rng: &mut Rng,
) -> Result<(ParamSet, PretrainReport)> {
    let mut params = init_params(topology, variant, rng, config.init_scale)?;
    let mut report = PretrainReport::default();
    if config.epochs == 0 {
        return Ok((params, report));
    }
    if data.is_empty() {
        return Err(Error::InvalidConfig("empty pretraining dataset".to_string()));
    }

    match &mut params.core {
        CoreParams::Emf { stack } => {
            let mut visible = Matrix::hstack(&data.left, &data.right)?;
            for (i, layer) in stack.iter_mut().enumerate() {
                let unit = RbmUnit::new(vec![layer.w.clone()], layer.b.clone());
                let trained = train_unit(&format!("z{}", i + 1), unit, &[&visible], config, rng, &mut report)?;
                layer.w = trained.weights.into_iter().next().unwrap();
                layer.b = trained.hid_bias;
                visible = sigmoid(&visible.matmul(&layer.w)?.add_row_broadcast(&layer.b)?);
            }
        }
        CoreParams::Imf { x_path, y_path, fuse } => {
            let mut vx = data.left.clone();
            for (i, layer) in x_path.iter_mut().enumerate() {
                let unit = RbmUnit::new(vec![layer.w.clone()], layer.b.clone());
                let trained = train_unit(&format!("x{}", i + 1), unit, &[&vx], config, rng, &mut report)?;
                layer.w = trained.weights.into_iter().next().unwrap();
                layer.b = trained.hid_bias;
                vx = sigmoid(&vx.matmul(&layer.w)?.add_row_broadcast(&layer.b)?);
            }
            let mut vy = data.right.clone();
            for (i, layer) in y_path.iter_mut().enumerate() {
                let unit = RbmUnit::new(vec![layer.w.clone()], layer.b.clone());
                let trained = train_unit(&format!("y{}", i + 1), unit, &[&vy], config, rng, &mut report)?;
                layer.w = trained.weights.into_iter().next().unwrap();
                layer.b = trained.hid_bias;
                vy = sigmoid(&vy.matmul(&layer.w)?.add_row_broadcast(&layer.b)?);
            }
            let unit = RbmUnit::new(vec![fuse.w_xs.clone(), fuse.w_ys.clone()], fuse.b_s.clone());
            let trained = train_unit("fuse", unit, &[&vx, &vy], config, rng, &mut report)?;
            let mut weights = trained.weights.into_iter();
            fuse.w_xs = weights.next().unwrap();
            fuse.w_ys = weights.next().unwrap();
            fuse.b_s = trained.hid_bias;
        }
        CoreParams::Dmf { x_path, y_path, units } => {
            let mut vx = data.left.clone();
            let mut vy = data.right.clone();
            let mut s_prev: Option<Matrix> = None;
            for l in 1..=units.len() {
                let xl = &mut x_path[l - 1];
                let unit = RbmUnit::new(vec![xl.w.clone()], xl.b.clone());
                let trained = train_unit(&format!("x{l}"), unit, &[&vx], config, rng, &mut report)?;
                xl.w = trained.weights.into_iter().next().unwrap();
                xl.b = trained.hid_bias;
                vx = sigmoid(&vx.matmul(&xl.w)?.add_row_broadcast(&xl.b)?);

                let yl = &mut y_path[l - 1];
                let unit = RbmUnit::new(vec![yl.w.clone()], yl.b.clone());
                let trained = train_unit(&format!("y{l}"), unit, &[&vy], config, rng, &mut report)?;
                yl.w = trained.weights.into_iter().next().unwrap();
                yl.b = trained.hid_bias;
                vy = sigmoid(&vy.matmul(&yl.w)?.add_row_broadcast(&yl.b)?);

                let fusion = &mut units[l - 1];
                let mut weights = vec![fusion.w_xs.clone(), fusion.w_ys.clone()];
                let mut blocks: Vec<&Matrix> = vec![&vx, &vy];
                if let Some(w_ss) = &fusion.w_ss {
                    weights.push(w_ss.clone());
                    blocks.push(s_prev.as_ref().expect("s_prev exists at level >= 2"));
                }
                let unit = RbmUnit::new(weights, fusion.b_s.clone());
                let trained = train_unit(&format!("s{l}"), unit, &blocks, config, rng, &mut report)?;
                let mut weights = trained.weights.into_iter();
                fusion.w_xs = weights.next().unwrap();
                fusion.w_ys = weights.next().unwrap();
                let mut pre = vx.matmul(&fusion.w_xs)?.add(&vy.matmul(&fusion.w_ys)?)?;
                if fusion.w_ss.is_some() {
                    fusion.w_ss = Some(weights.next().unwrap());
                    pre = pre.add(&s_prev.as_ref().unwrap().matmul(fusion.w_ss.as_ref().unwrap())?)?;
                }
                fusion.b_s = trained.hid_bias;
                s_prev = Some(sigmoid(&pre.add_row_broadcast(&fusion.b_s)?));
            }
        }
    }
    Ok((params, report))
}
