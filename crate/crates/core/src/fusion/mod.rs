//! The fusion graph: topology, parameters, forward and backward passes
//! for the three schemes, the mirrored decoder, and checkpointing.

pub mod backward;
pub mod checkpoint;
pub mod decoder;
pub mod forward;
pub mod params;
pub mod topology;

pub use backward::{backward, backward_dmf, backward_emf, backward_imf};
pub use decoder::{decode_backward, decode_forward, DecoderTrace};
pub use forward::{forward, forward_dmf, forward_emf, forward_imf, joint_representation, ForwardTrace};
pub use params::{
    init_params, sgd_step, CoreParams, DecoderParams, DecoderPathway, DenseLayer, FusionUnit,
    GradientSet, HeadParams, ParamSet, DEFAULT_INIT_SCALE,
};
pub use topology::{FusionScheme, FusionTopology, ModelVariant};
