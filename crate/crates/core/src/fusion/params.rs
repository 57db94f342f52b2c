//! Parameter containers for the fusion graphs and their heads.
//!
//! Every weight family lives behind a canonical name (see
//! [`ParamSet::matrices`]); checkpointing, SGD updates, and the
//! finite-difference harness all walk parameters in that one order.
//! Bias matrices are 1-row and their names end in `.b`.

use crate::error::{Error, Result};
use crate::fusion::topology::{FusionScheme, FusionTopology, ModelVariant};
use crate::numeric::{Matrix, Rng};

/// One affine layer: `w` is input-by-output, `b` is 1-by-output.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub w: Matrix,
    pub b: Matrix,
}

impl DenseLayer {
    fn zeros(input: usize, output: usize) -> Self {
        DenseLayer {
            w: Matrix::zeros(input, output),
            b: Matrix::zeros(1, output),
        }
    }
}

/// Weights of one multimodal unit: modality-to-shared maps, the
/// incoming shared-to-shared map (absent at the first level), and the
/// shared-layer bias.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionUnit {
    pub w_xs: Matrix,
    pub w_ys: Matrix,
    pub w_ss: Option<Matrix>,
    pub b_s: Matrix,
}

/// Scheme-specific core weights. Families a scheme does not use are
/// absent, not zero-sized placeholders.
#[derive(Debug, Clone, PartialEq)]
pub enum CoreParams {
    Emf {
        stack: Vec<DenseLayer>,
    },
    Imf {
        x_path: Vec<DenseLayer>,
        y_path: Vec<DenseLayer>,
        fuse: FusionUnit,
    },
    Dmf {
        x_path: Vec<DenseLayer>,
        y_path: Vec<DenseLayer>,
        units: Vec<FusionUnit>,
    },
}

/// One generation pathway of the mirrored decoder (see
/// [`DecoderParams::Dmf`]): per-level maps from the shared layer, the
/// downward modality chain, and the final output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderPathway {
    /// Level l activation from shared layer l (carries the level bias).
    pub from_s: Vec<DenseLayer>,
    /// Contribution of level l+1 to level l (no bias of its own).
    pub from_h: Vec<Matrix>,
    /// Final map from level-1 activation to the reconstructed input.
    pub out: DenseLayer,
}

/// Decoder weights mirroring the encoder graph with untied weights.
#[derive(Debug, Clone, PartialEq)]
pub enum DecoderParams {
    Emf {
        stack: Vec<DenseLayer>,
    },
    Imf {
        x_chain: Vec<DenseLayer>,
        y_chain: Vec<DenseLayer>,
    },
    Dmf {
        /// Downward shared chain: entry l-1 maps shared level l+1 to l.
        s_chain: Vec<DenseLayer>,
        x: DecoderPathway,
        y: DecoderPathway,
    },
}

/// Head on top of the joint representation.
#[derive(Debug, Clone, PartialEq)]
pub enum HeadParams {
    Softmax(DenseLayer),
    Decoder(Box<DecoderParams>),
}

/// All weights of one model: core fusion graph plus head.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    pub topology: FusionTopology,
    pub core: CoreParams,
    pub head: HeadParams,
}

fn zero_path(sizes: &[usize]) -> Vec<DenseLayer> {
    sizes
        .windows(2)
        .map(|w| DenseLayer::zeros(w[0], w[1]))
        .collect()
}

impl ParamSet {
    /// All-zero parameters of the right shape for a topology/variant.
    pub fn zeros(topology: &FusionTopology, variant: ModelVariant) -> Result<ParamSet> {
        topology.validate()?;
        let levels = topology.levels();
        let core = match topology.scheme {
            FusionScheme::Emf => {
                let concat = topology.x_sizes[0] + topology.y_sizes[0];
                let mut sizes = vec![concat];
                sizes.extend(&topology.s_sizes);
                CoreParams::Emf { stack: zero_path(&sizes) }
            }
            FusionScheme::Imf => CoreParams::Imf {
                x_path: zero_path(&topology.x_sizes),
                y_path: zero_path(&topology.y_sizes),
                fuse: FusionUnit {
                    w_xs: Matrix::zeros(topology.x_sizes[levels], topology.joint_width()),
                    w_ys: Matrix::zeros(topology.y_sizes[levels], topology.joint_width()),
                    w_ss: None,
                    b_s: Matrix::zeros(1, topology.joint_width()),
                },
            },
            FusionScheme::Dmf => {
                let units = (1..=levels)
                    .map(|l| FusionUnit {
                        w_xs: Matrix::zeros(topology.x_sizes[l], topology.s_sizes[l - 1]),
                        w_ys: Matrix::zeros(topology.y_sizes[l], topology.s_sizes[l - 1]),
                        w_ss: (l >= 2)
                            .then(|| Matrix::zeros(topology.s_sizes[l - 2], topology.s_sizes[l - 1])),
                        b_s: Matrix::zeros(1, topology.s_sizes[l - 1]),
                    })
                    .collect();
                CoreParams::Dmf {
                    x_path: zero_path(&topology.x_sizes),
                    y_path: zero_path(&topology.y_sizes),
                    units,
                }
            }
        };
        let head = match variant {
            ModelVariant::Discriminative => {
                if topology.n_classes == 0 {
                    return Err(Error::InvalidConfig(
                        "discriminative variant needs n_classes > 0".to_string(),
                    ));
                }
                HeadParams::Softmax(DenseLayer::zeros(topology.joint_width(), topology.n_classes))
            }
            ModelVariant::EncoderDecoder => {
                HeadParams::Decoder(Box::new(Self::zero_decoder(topology)))
            }
        };
        Ok(ParamSet { topology: topology.clone(), core, head })
    }

    fn zero_decoder(topology: &FusionTopology) -> DecoderParams {
        let levels = topology.levels();
        match topology.scheme {
            FusionScheme::Emf => {
                // Reversed stack back to the concatenated input.
                let concat = topology.x_sizes[0] + topology.y_sizes[0];
                let mut sizes: Vec<usize> = topology.s_sizes.clone();
                sizes.reverse();
                sizes.push(concat);
                DecoderParams::Emf { stack: zero_path(&sizes) }
            }
            FusionScheme::Imf => {
                let chain = |path: &[usize]| {
                    let mut sizes = vec![topology.joint_width()];
                    let mut down: Vec<usize> = path.to_vec();
                    down.reverse();
                    sizes.extend(down);
                    zero_path(&sizes)
                };
                DecoderParams::Imf {
                    x_chain: chain(&topology.x_sizes),
                    y_chain: chain(&topology.y_sizes),
                }
            }
            FusionScheme::Dmf => {
                let s_chain = (1..levels)
                    .map(|l| DenseLayer::zeros(topology.s_sizes[l], topology.s_sizes[l - 1]))
                    .collect();
                let pathway = |sizes: &[usize]| DecoderPathway {
                    from_s: (1..=levels)
                        .map(|l| DenseLayer::zeros(topology.s_sizes[l - 1], sizes[l]))
                        .collect(),
                    from_h: (1..levels)
                        .map(|l| Matrix::zeros(sizes[l + 1], sizes[l]))
                        .collect(),
                    out: DenseLayer::zeros(sizes[1], sizes[0]),
                };
                DecoderParams::Dmf {
                    s_chain,
                    x: pathway(&topology.x_sizes),
                    y: pathway(&topology.y_sizes),
                }
            }
        }
    }

    pub fn variant(&self) -> ModelVariant {
        match self.head {
            HeadParams::Softmax(_) => ModelVariant::Discriminative,
            HeadParams::Decoder(_) => ModelVariant::EncoderDecoder,
        }
    }

    /// Named view of every matrix, in canonical order. Bias names end
    /// in `.b`; everything else is a weight.
    pub fn matrices(&self) -> Vec<(String, &Matrix)> {
        let mut out = Vec::new();
        fn path<'a>(out: &mut Vec<(String, &'a Matrix)>, tag: &str, layers: &'a [DenseLayer]) {
            for (i, layer) in layers.iter().enumerate() {
                out.push((format!("{tag}{}.w", i + 1), &layer.w));
                out.push((format!("{tag}{}.b", i + 1), &layer.b));
            }
        }
        match &self.core {
            CoreParams::Emf { stack } => path(&mut out, "z", stack),
            CoreParams::Imf { x_path, y_path, fuse } => {
                path(&mut out, "x", x_path);
                path(&mut out, "y", y_path);
                out.push(("fuse.w_xs".to_string(), &fuse.w_xs));
                out.push(("fuse.w_ys".to_string(), &fuse.w_ys));
                out.push(("fuse.b".to_string(), &fuse.b_s));
            }
            CoreParams::Dmf { x_path, y_path, units } => {
                path(&mut out, "x", x_path);
                path(&mut out, "y", y_path);
                for (i, unit) in units.iter().enumerate() {
                    let l = i + 1;
                    out.push((format!("s{l}.w_xs"), &unit.w_xs));
                    out.push((format!("s{l}.w_ys"), &unit.w_ys));
                    if let Some(w_ss) = &unit.w_ss {
                        out.push((format!("s{l}.w_ss"), w_ss));
                    }
                    out.push((format!("s{l}.b"), &unit.b_s));
                }
            }
        }
        match &self.head {
            HeadParams::Softmax(layer) => {
                out.push(("head.w".to_string(), &layer.w));
                out.push(("head.b".to_string(), &layer.b));
            }
            HeadParams::Decoder(dec) => match dec.as_ref() {
                DecoderParams::Emf { stack } => path(&mut out, "dec.z", stack),
                DecoderParams::Imf { x_chain, y_chain } => {
                    path(&mut out, "dec.x", x_chain);
                    path(&mut out, "dec.y", y_chain);
                }
                DecoderParams::Dmf { s_chain, x, y } => {
                    path(&mut out, "dec.s", s_chain);
                    for (tag, pw) in [("x", x), ("y", y)] {
                        for (i, layer) in pw.from_s.iter().enumerate() {
                            out.push((format!("dec.{tag}{}.from_s.w", i + 1), &layer.w));
                            out.push((format!("dec.{tag}{}.b", i + 1), &layer.b));
                        }
                        for (i, m) in pw.from_h.iter().enumerate() {
                            out.push((format!("dec.{tag}{}.from_h.w", i + 1), m));
                        }
                        out.push((format!("dec.{tag}_out.w"), &pw.out.w));
                        out.push((format!("dec.{tag}_out.b"), &pw.out.b));
                    }
                }
            },
        }
        out
    }

    /// Mutable twin of [`ParamSet::matrices`]; same names, same order.
    pub fn matrices_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        let mut out = Vec::new();
        fn path<'a>(out: &mut Vec<(String, &'a mut Matrix)>, tag: &str, layers: &'a mut [DenseLayer]) {
            for (i, layer) in layers.iter_mut().enumerate() {
                out.push((format!("{tag}{}.w", i + 1), &mut layer.w));
                out.push((format!("{tag}{}.b", i + 1), &mut layer.b));
            }
        }
        match &mut self.core {
            CoreParams::Emf { stack } => path(&mut out, "z", stack),
            CoreParams::Imf { x_path, y_path, fuse } => {
                path(&mut out, "x", x_path);
                path(&mut out, "y", y_path);
                out.push(("fuse.w_xs".to_string(), &mut fuse.w_xs));
                out.push(("fuse.w_ys".to_string(), &mut fuse.w_ys));
                out.push(("fuse.b".to_string(), &mut fuse.b_s));
            }
            CoreParams::Dmf { x_path, y_path, units } => {
                path(&mut out, "x", x_path);
                path(&mut out, "y", y_path);
                for (i, unit) in units.iter_mut().enumerate() {
                    let l = i + 1;
                    out.push((format!("s{l}.w_xs"), &mut unit.w_xs));
                    out.push((format!("s{l}.w_ys"), &mut unit.w_ys));
                    if let Some(w_ss) = &mut unit.w_ss {
                        out.push((format!("s{l}.w_ss"), w_ss));
                    }
                    out.push((format!("s{l}.b"), &mut unit.b_s));
                }
            }
        }
        match &mut self.head {
            HeadParams::Softmax(layer) => {
                out.push(("head.w".to_string(), &mut layer.w));
                out.push(("head.b".to_string(), &mut layer.b));
            }
            HeadParams::Decoder(dec) => match dec.as_mut() {
                DecoderParams::Emf { stack } => path(&mut out, "dec.z", stack),
                DecoderParams::Imf { x_chain, y_chain } => {
                    path(&mut out, "dec.x", x_chain);
                    path(&mut out, "dec.y", y_chain);
                }
                DecoderParams::Dmf { s_chain, x, y } => {
                    path(&mut out, "dec.s", s_chain);
                    for (tag, pw) in [("x", x), ("y", y)] {
                        for (i, layer) in pw.from_s.iter_mut().enumerate() {
                            out.push((format!("dec.{tag}{}.from_s.w", i + 1), &mut layer.w));
                            out.push((format!("dec.{tag}{}.b", i + 1), &mut layer.b));
                        }
                        for (i, m) in pw.from_h.iter_mut().enumerate() {
                            out.push((format!("dec.{tag}{}.from_h.w", i + 1), m));
                        }
                        out.push((format!("dec.{tag}_out.w"), &mut pw.out.w));
                        out.push((format!("dec.{tag}_out.b"), &mut pw.out.b));
                    }
                }
            },
        }
        out
    }

    /// Total number of scalar parameters.
    pub fn param_count(&self) -> usize {
        self.matrices()
            .iter()
            .map(|(_, m)| m.rows() * m.cols())
            .sum()
    }
}

/// Draws weights i.i.d. uniform in [-scale, scale]; biases stay zero.
/// Draw order is the canonical matrix order, row-major within each
/// matrix, so a seed pins every parameter bit.
pub fn init_params(
    topology: &FusionTopology,
    variant: ModelVariant,
    rng: &mut Rng,
    scale: f64,
) -> Result<ParamSet> {
    if scale < 0.0 {
        return Err(Error::InvalidConfig(format!("negative init scale {scale}")));
    }
    let mut params = ParamSet::zeros(topology, variant)?;
    for (name, m) in params.matrices_mut() {
        if name.ends_with(".b") {
            continue;
        }
        for v in m.data_mut() {
            *v = rng.range(-scale, scale);
        }
    }
    Ok(params)
}

/// Default init scale used by the training entry points.
pub const DEFAULT_INIT_SCALE: f64 = 0.05;

/// Gradients, one matrix per [`ParamSet`] matrix, same shapes and names.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet(pub ParamSet);

impl GradientSet {
    pub fn zeros_like(params: &ParamSet) -> Result<GradientSet> {
        Ok(GradientSet(ParamSet::zeros(&params.topology, params.variant())?))
    }

    pub fn matrices(&self) -> Vec<(String, &Matrix)> {
        self.0.matrices()
    }

    pub fn matrices_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        self.0.matrices_mut()
    }

    pub fn is_finite(&self) -> bool {
        self.matrices().iter().all(|(_, m)| m.is_finite())
    }
}

/// One plain SGD step: `p -= lr * g` for every parameter matrix.
pub fn sgd_step(params: &mut ParamSet, grads: &GradientSet, lr: f64) -> Result<()> {
    let gmats = grads.matrices();
    for ((pname, p), (gname, g)) in params.matrices_mut().into_iter().zip(gmats) {
        debug_assert_eq!(pname, gname);
        p.scaled_add_assign(-lr, g)?;
    }
    Ok(())
}
