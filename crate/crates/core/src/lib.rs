//! Dense multimodal fusion networks, from scratch.
//!
//! Two modality pathways (left and right half-images) are joined either
//! early (concatenated input), intermediately (one top shared layer),
//! or densely (a shared layer at every level, each fusing the
//! same-level modality activations and the previous shared layer). All
//! gradients are derived by hand and verified against central finite
//! differences; training is plain minibatch SGD with optional
//! layer-wise CD-1 initialization. Everything is deterministic given a
//! seed.

pub mod data;
pub mod error;
pub mod fusion;
pub mod gradcheck;
pub mod numeric;
pub mod pretrain;
pub mod train;

pub use error::{Error, Result};
pub use fusion::{
    backward, forward, init_params, joint_representation, FusionScheme, FusionTopology,
    GradientSet, ModelVariant, ParamSet,
};
pub use numeric::{Matrix, Rng};
