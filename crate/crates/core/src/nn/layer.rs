//! Layer kinds supported by [`Network`](super::Network).
//!
//! Linear weights are stored `in x out` so a batch `X (n x in)` maps to
//! `X W + b`. Only Linear and BatchNorm carry trainable parameters; BatchNorm
//! running statistics are state, not parameters.

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::error::{Error, Result};

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;
pub const ELU_ALPHA: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Linear {
    /// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero bias.
    pub fn glorot<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (input + output) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit).expect("finite glorot limit");
        let data = (0..input * output).map(|_| dist.sample(rng)).collect();
        Self {
            weight: Matrix::from_vec(input, output, data).expect("glorot shape"),
            bias: vec![0.0; output],
        }
    }

    /// Builds a layer from explicit parameters.
    pub fn from_parts(weight: Matrix, bias: Vec<f64>) -> Result<Self> {
        if bias.len() != weight.cols() {
            return Err(Error::dims("linear bias", weight.cols(), bias.len()));
        }
        Ok(Self { weight, bias })
    }

    pub fn input_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.cols()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub scale: Vec<f64>,
    pub shift: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub epsilon: f64,
}

impl BatchNorm {
    pub fn new(dim: usize) -> Self {
        Self {
            scale: vec![1.0; dim],
            shift: vec![0.0; dim],
            running_mean: vec![0.0; dim],
            running_var: vec![1.0; dim],
            momentum: BN_MOMENTUM,
            epsilon: BN_EPSILON,
        }
    }

    pub fn dim(&self) -> usize {
        self.scale.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Layer {
    Linear(Linear),
    BatchNorm(BatchNorm),
    Relu,
    Elu { alpha: f64 },
    Dropout { p: f64 },
}

impl Layer {
    pub fn elu() -> Self {
        Layer::Elu { alpha: ELU_ALPHA }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Layer::Linear(_) => "linear",
            Layer::BatchNorm(_) => "batchnorm",
            Layer::Relu => "relu",
            Layer::Elu { .. } => "elu",
            Layer::Dropout { .. } => "dropout",
        }
    }

    pub(crate) fn validate(&self, index: usize) -> Result<()> {
        match self {
            Layer::Linear(l) => {
                if l.bias.len() != l.weight.cols() {
                    return Err(Error::dims(format!("layer {index} bias"), l.weight.cols(), l.bias.len()));
                }
            }
            Layer::BatchNorm(bn) => {
                let d = bn.scale.len();
                for (what, len) in [
                    ("shift", bn.shift.len()),
                    ("running mean", bn.running_mean.len()),
                    ("running variance", bn.running_var.len()),
                ] {
                    if len != d {
                        return Err(Error::dims(format!("layer {index} batchnorm {what}"), d, len));
                    }
                }
                if bn.running_var.iter().any(|&v| !(v > 0.0)) {
                    return Err(Error::InvalidConfig(format!(
                        "layer {index}: batchnorm running variance must be strictly positive"
                    )));
                }
                if !(bn.epsilon > 0.0) || !(0.0..=1.0).contains(&bn.momentum) {
                    return Err(Error::InvalidConfig(format!(
                        "layer {index}: batchnorm epsilon must be > 0 and momentum in [0, 1]"
                    )));
                }
            }
            Layer::Relu => {}
            Layer::Elu { alpha } => {
                if !(*alpha > 0.0) {
                    return Err(Error::InvalidConfig(format!("layer {index}: ELU alpha must be > 0")));
                }
            }
            Layer::Dropout { p } => {
                if !(0.0..1.0).contains(p) {
                    return Err(Error::InvalidConfig(format!(
                        "layer {index}: dropout probability must be in [0, 1)"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Output width for a given input width, or `None` for shape-preserving layers.
    pub(crate) fn dims(&self) -> Option<(usize, usize)> {
        match self {
            Layer::Linear(l) => Some((l.input_dim(), l.output_dim())),
            Layer::BatchNorm(bn) => Some((bn.dim(), bn.dim())),
            _ => None,
        }
    }

    /// Trainable parameter tensors, flattened, in a fixed order.
    pub fn params(&self) -> Vec<&[f64]> {
        match self {
            Layer::Linear(l) => vec![l.weight.data(), &l.bias],
            Layer::BatchNorm(bn) => vec![&bn.scale, &bn.shift],
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            Layer::Linear(l) => vec![l.weight.data_mut(), &mut l.bias],
            Layer::BatchNorm(bn) => vec![&mut bn.scale, &mut bn.shift],
            _ => Vec::new(),
        }
    }
}
