//! Matrix arithmetic, activations, losses, and seeded RNG.

mod loss;
mod matrix;
mod rng;

pub use loss::{mse_loss, sigmoid, sigmoid_prime_from_output, sigmoid_scalar, softmax_xent};
pub use matrix::Matrix;
pub use rng::{derive_seed, Rng};
