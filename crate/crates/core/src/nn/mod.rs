//! Dense network engine: layers, exact backpropagation, Adam and gradient checking.

mod adam;
pub mod dd;
pub mod gradcheck;
mod layer;
mod matrix;
mod network;

pub use adam::{adam_step, AdamState};
pub use gradcheck::{grad_check, Mse, Objective};
pub use layer::{BatchNorm, Layer, Linear, BN_EPSILON, BN_MOMENTUM, ELU_ALPHA};
pub use matrix::Matrix;
pub use network::{Activations, Gradients, Mode, Network};
pub(crate) use network::column_moments;
