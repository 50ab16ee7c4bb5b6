use super::{Gradients, Network};
use crate::error::{Error, Result};

/// Adam moment buffers, one per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    timestep: u64,
    m: Vec<Vec<Vec<f64>>>,
    v: Vec<Vec<Vec<f64>>>,
}

impl AdamState {
    pub fn new(net: &Network, learning_rate: f64) -> Self {
        let zeros = Gradients::zeros_like(net).layers;
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            timestep: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn timestep(&self) -> u64 {
        self.timestep
    }

    pub fn first_moment(&self) -> &[Vec<Vec<f64>>] {
        &self.m
    }

    pub fn second_moment(&self) -> &[Vec<Vec<f64>>] {
        &self.v
    }
}

/// One bias-corrected Adam update of every trainable parameter.
pub fn adam_step(net: &mut Network, grads: &Gradients, state: &mut AdamState) -> Result<()> {
    let shapes_match = |buf: &[Vec<Vec<f64>>]| {
        buf.len() == grads.layers.len()
            && buf.iter().zip(&grads.layers).all(|(a, b)| {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.len() == y.len())
            })
    };
    if !shapes_match(&state.m) || net.layers().len() != grads.layers.len() {
        return Err(Error::InvalidInput("gradient shapes do not match the network".into()));
    }
    for (layer, g) in net.layers().iter().zip(&grads.layers) {
        let params = layer.params();
        if params.len() != g.len() || params.iter().zip(g).any(|(p, gg)| p.len() != gg.len()) {
            return Err(Error::InvalidInput("gradient shapes do not match the network".into()));
        }
    }
    if !grads.all_finite() {
        return Err(Error::NonFiniteInput("gradient".into()));
    }

    state.timestep += 1;
    let t = state.timestep as i32;
    let (b1, b2, lr, eps) = (state.beta1, state.beta2, state.learning_rate, state.epsilon);
    let bc1 = 1.0 - b1.powi(t);
    let bc2 = 1.0 - b2.powi(t);
    for (li, layer) in net.layers_mut().iter_mut().enumerate() {
        for (pi, param) in layer.params_mut().into_iter().enumerate() {
            let g = &grads.layers[li][pi];
            let m = &mut state.m[li][pi];
            let v = &mut state.v[li][pi];
            for j in 0..param.len() {
                m[j] = b1 * m[j] + (1.0 - b1) * g[j];
                v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                param[j] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
    Ok(())
}
