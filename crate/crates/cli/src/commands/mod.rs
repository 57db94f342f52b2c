pub mod common;
pub mod eval;
pub mod gradcheck;
pub mod sweep;
pub mod synth;
pub mod train;
