use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layer::{BatchNorm, Layer};
use super::Matrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Batch statistics in BatchNorm, sampled dropout masks.
    Train,
    /// Running statistics in BatchNorm, dropout is the identity.
    Eval,
}

/// Per-parameter-tensor gradients, laid out like [`Layer::params`] for each layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Vec<Vec<f64>>>,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        Self {
            layers: net
                .layers()
                .iter()
                .map(|l| l.params().iter().map(|p| vec![0.0; p.len()]).collect())
                .collect(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flatten().flatten()
    }

    pub fn is_zero(&self) -> bool {
        self.iter().all(|&g| g == 0.0)
    }

    pub fn all_finite(&self) -> bool {
        self.iter().all(|g| g.is_finite())
    }

    pub fn scale(&mut self, factor: f64) {
        for g in self.layers.iter_mut().flatten().flatten() {
            *g *= factor;
        }
    }
}

#[derive(Debug, Clone)]
enum Cache {
    Plain,
    BatchNorm {
        normalized: Matrix,
        inv_std: Vec<f64>,
        batch_stats: bool,
    },
    Dropout {
        mask: Vec<f64>,
    },
}

/// Everything a forward pass retains for [`Network::backward`].
#[derive(Debug, Clone)]
pub struct Activations {
    mode: Mode,
    version: u64,
    input: Matrix,
    outputs: Vec<Matrix>,
    caches: Vec<Cache>,
}

impl Activations {
    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Output of the whole network.
    pub fn output(&self) -> &Matrix {
        self.outputs.last().unwrap_or(&self.input)
    }

    pub fn into_output(mut self) -> Matrix {
        self.outputs.pop().unwrap_or(self.input)
    }

    /// Output of layer `index`.
    pub fn layer_output(&self, index: usize) -> &Matrix {
        &self.outputs[index]
    }

    /// Scaled keep-mask sampled by dropout layer `index`, if it sampled one.
    pub fn dropout_mask(&self, index: usize) -> Option<&[f64]> {
        match &self.caches[index] {
            Cache::Dropout { mask } => Some(mask),
            _ => None,
        }
    }

    /// Input of layer `index`.
    pub fn layer_input(&self, index: usize) -> &Matrix {
        if index == 0 {
            &self.input
        } else {
            &self.outputs[index - 1]
        }
    }
}

/// A fixed sequence of dense layers with exact backpropagation.
///
/// Training mutates BatchNorm running statistics, so a network being trained
/// is owned by one thread. [`Network::forward_eval`] only borrows, which lets a
/// trained network serve concurrent inference.
#[derive(Debug, Clone)]
pub struct Network {
    layers: Vec<Layer>,
    input_dim: usize,
    output_dim: usize,
    version: u64,
}

impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.input_dim == other.input_dim && self.layers == other.layers
    }
}

impl Network {
    pub fn new(input_dim: usize, layers: Vec<Layer>) -> Result<Self> {
        let mut width = input_dim;
        for (i, layer) in layers.iter().enumerate() {
            layer.validate(i)?;
            if let Some((input, output)) = layer.dims() {
                if input != width {
                    return Err(Error::dims(format!("layer {i} ({}) input", layer.name()), width, input));
                }
                width = output;
            }
        }
        Ok(Self {
            layers,
            input_dim,
            output_dim: width,
            version: 0,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Mutable access to the layers. Invalidates outstanding activations.
    pub fn layers_mut(&mut self) -> &mut [Layer] {
        self.version += 1;
        &mut self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().flat_map(|l| l.params()).map(|p| p.len()).sum()
    }

    pub fn has_dropout(&self) -> bool {
        self.layers
            .iter()
            .any(|l| matches!(l, Layer::Dropout { p } if *p > 0.0))
    }

    /// Forward pass. In `Train` mode BatchNorm running statistics are updated.
    pub fn forward(&mut self, batch: &Matrix, mode: Mode, seed: Option<u64>) -> Result<Activations> {
        let (acts, stats) = self.run(batch, mode, seed)?;
        if mode == Mode::Train {
            let n = batch.rows();
            let mut stats = stats.into_iter();
            for layer in &mut self.layers {
                if let Layer::BatchNorm(bn) = layer {
                    let (mean, var) = stats.next().expect("one stat pair per batchnorm");
                    update_running(bn, &mean, &var, n);
                }
            }
        }
        Ok(acts)
    }

    /// Eval-mode forward pass; never mutates the network.
    pub fn forward_eval(&self, batch: &Matrix) -> Result<Activations> {
        Ok(self.run(batch, Mode::Eval, None)?.0)
    }

    /// Forward pass in any mode that leaves running statistics untouched.
    pub fn forward_detached(&self, batch: &Matrix, mode: Mode, seed: Option<u64>) -> Result<Activations> {
        Ok(self.run(batch, mode, seed)?.0)
    }

    pub fn predict(&self, batch: &Matrix) -> Result<Matrix> {
        Ok(self.forward_eval(batch)?.into_output())
    }

    #[allow(clippy::type_complexity)]
    fn run(&self, batch: &Matrix, mode: Mode, seed: Option<u64>) -> Result<(Activations, Vec<(Vec<f64>, Vec<f64>)>)> {
        if batch.cols() != self.input_dim {
            return Err(Error::dims("network input", self.input_dim, batch.cols()));
        }
        if !batch.all_finite() {
            return Err(Error::NonFiniteInput("network input batch".into()));
        }
        let mut rng = match (mode, seed) {
            (Mode::Train, Some(s)) => Some(ChaCha8Rng::seed_from_u64(s)),
            (Mode::Train, None) if self.has_dropout() => {
                return Err(Error::InvalidInput(
                    "train-mode forward through dropout needs a seed".into(),
                ))
            }
            _ => None,
        };

        let mut outputs = Vec::with_capacity(self.layers.len());
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut stats = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            let x = outputs.last().unwrap_or(batch);
            let (y, cache) = match layer {
                Layer::Linear(l) => {
                    let mut y = x.matmul(&l.weight);
                    for r in 0..y.rows() {
                        for (v, b) in y.row_mut(r).iter_mut().zip(&l.bias) {
                            *v += b;
                        }
                    }
                    (y, Cache::Plain)
                }
                Layer::BatchNorm(bn) => {
                    let use_batch = mode == Mode::Train;
                    let (mean, var) = if use_batch {
                        let (m, v) = column_moments(x);
                        stats.push((m.clone(), v.clone()));
                        (m, v)
                    } else {
                        (bn.running_mean.clone(), bn.running_var.clone())
                    };
                    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + bn.epsilon).sqrt()).collect();
                    let mut normalized = x.clone();
                    let mut y = x.clone();
                    for r in 0..x.rows() {
                        let nr = normalized.row_mut(r);
                        for c in 0..nr.len() {
                            nr[c] = (nr[c] - mean[c]) * inv_std[c];
                        }
                        let yr = y.row_mut(r);
                        for c in 0..yr.len() {
                            yr[c] = bn.scale[c] * nr[c] + bn.shift[c];
                        }
                    }
                    (
                        y,
                        Cache::BatchNorm {
                            normalized,
                            inv_std,
                            batch_stats: use_batch,
                        },
                    )
                }
                Layer::Relu => {
                    let mut y = x.clone();
                    y.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
                    (y, Cache::Plain)
                }
                Layer::Elu { alpha } => {
                    let mut y = x.clone();
                    y.data_mut()
                        .iter_mut()
                        .for_each(|v| *v = if *v > 0.0 { *v } else { alpha * v.exp_m1() });
                    (y, Cache::Plain)
                }
                Layer::Dropout { p } => match rng.as_mut() {
                    Some(rng) if *p > 0.0 => {
                        let keep = 1.0 / (1.0 - p);
                        let mask: Vec<f64> = (0..x.data().len())
                            .map(|_| if rng.random::<f64>() < *p { 0.0 } else { keep })
                            .collect();
                        let mut y = x.clone();
                        y.data_mut().iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
                        (y, Cache::Dropout { mask })
                    }
                    _ => (x.clone(), Cache::Plain),
                },
            };
            if !y.all_finite() {
                return Err(Error::NonFinite { layer: i });
            }
            outputs.push(y);
            caches.push(cache);
        }
        Ok((
            Activations {
                mode,
                version: self.version,
                input: batch.clone(),
                outputs,
                caches,
            },
            stats,
        ))
    }

    /// Backpropagates `output_grad` through the pass recorded in `acts`.
    /// Returns parameter gradients and the gradient with respect to the input batch.
    pub fn backward(&self, acts: &Activations, output_grad: &Matrix) -> Result<(Gradients, Matrix)> {
        self.backprop(acts, output_grad, true)
    }

    /// Like [`Network::backward`] but skips parameter gradients (frozen networks).
    pub fn input_gradient(&self, acts: &Activations, output_grad: &Matrix) -> Result<Matrix> {
        Ok(self.backprop(acts, output_grad, false)?.1)
    }

    fn backprop(&self, acts: &Activations, output_grad: &Matrix, want_params: bool) -> Result<(Gradients, Matrix)> {
        self.check_activations(acts)?;
        if output_grad.shape() != acts.output().shape() {
            return Err(Error::dims(
                "output gradient size",
                acts.output().data().len(),
                output_grad.data().len(),
            ));
        }
        let mut grads = Gradients {
            layers: vec![Vec::new(); self.layers.len()],
        };
        let mut delta = output_grad.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let x = acts.layer_input(i);
            let y = &acts.outputs[i];
            delta = match (layer, &acts.caches[i]) {
                (Layer::Linear(l), _) => {
                    if want_params {
                        let dw = x.t_matmul(&delta);
                        let mut db = vec![0.0; l.output_dim()];
                        // A bias shift is removed exactly by a following batch-statistics
                        // BatchNorm; summing delta would only accumulate rounding noise.
                        let normalized_next = matches!(
                            acts.caches.get(i + 1),
                            Some(Cache::BatchNorm { batch_stats: true, .. })
                        );
                        if !normalized_next {
                            for row in delta.iter_rows() {
                                db.iter_mut().zip(row).for_each(|(b, d)| *b += d);
                            }
                        }
                        grads.layers[i] = vec![dw.into_data(), db];
                    }
                    delta.matmul_t(&l.weight)
                }
                (
                    Layer::BatchNorm(bn),
                    Cache::BatchNorm {
                        normalized,
                        inv_std,
                        batch_stats,
                    },
                ) => {
                    let (n, d) = delta.shape();
                    let mut dscale = vec![0.0; d];
                    let mut dshift = vec![0.0; d];
                    for r in 0..n {
                        for c in 0..d {
                            dshift[c] += delta.get(r, c);
                            dscale[c] += delta.get(r, c) * normalized.get(r, c);
                        }
                    }
                    let mut dx = Matrix::zeros(n, d);
                    if *batch_stats {
                        // dx = inv_std * (g - mean(g) - xhat * mean(g * xhat)), g = dy * scale
                        let nf = n as f64;
                        for c in 0..d {
                            let mean_g = dshift[c] * bn.scale[c] / nf;
                            let mean_gx = dscale[c] * bn.scale[c] / nf;
                            for r in 0..n {
                                let g = delta.get(r, c) * bn.scale[c];
                                dx.set(r, c, inv_std[c] * (g - mean_g - normalized.get(r, c) * mean_gx));
                            }
                        }
                    } else {
                        for r in 0..n {
                            for c in 0..d {
                                dx.set(r, c, delta.get(r, c) * bn.scale[c] * inv_std[c]);
                            }
                        }
                    }
                    if want_params {
                        if matches!(
                            acts.caches.get(i + 1),
                            Some(Cache::BatchNorm { batch_stats: true, .. })
                        ) {
                            dshift.iter_mut().for_each(|g| *g = 0.0);
                        }
                        grads.layers[i] = vec![dscale, dshift];
                    }
                    dx
                }
                (Layer::Relu, _) => {
                    let mut dx = delta;
                    dx.data_mut()
                        .iter_mut()
                        .zip(y.data())
                        .for_each(|(g, &out)| {
                            if out <= 0.0 {
                                *g = 0.0;
                            }
                        });
                    dx
                }
                (Layer::Elu { alpha }, _) => {
                    let mut dx = delta;
                    dx.data_mut()
                        .iter_mut()
                        .zip(x.data().iter().zip(y.data()))
                        .for_each(|(g, (&inp, &out))| {
                            if inp <= 0.0 {
                                *g *= out + alpha;
                            }
                        });
                    dx
                }
                (Layer::Dropout { .. }, Cache::Dropout { mask }) => {
                    let mut dx = delta;
                    dx.data_mut().iter_mut().zip(mask).for_each(|(g, m)| *g *= m);
                    dx
                }
                (Layer::Dropout { .. }, _) => delta,
                (Layer::BatchNorm(_), _) => {
                    return Err(Error::StaleActivations(format!("layer {i}: missing batchnorm cache")))
                }
            };
        }
        Ok((grads, delta))
    }

    fn check_activations(&self, acts: &Activations) -> Result<()> {
        if acts.version != self.version {
            return Err(Error::StaleActivations(format!(
                "recorded at version {}, network is at version {}",
                acts.version, self.version
            )));
        }
        if acts.outputs.len() != self.layers.len() || acts.input.cols() != self.input_dim {
            return Err(Error::StaleActivations("layer count or input width differs".into()));
        }
        for (i, (layer, out)) in self.layers.iter().zip(&acts.outputs).enumerate() {
            if let Some((_, width)) = layer.dims() {
                if out.cols() != width {
                    return Err(Error::StaleActivations(format!("layer {i} output width differs")));
                }
            }
        }
        Ok(())
    }
}

/// Per-column mean and biased variance.
pub(crate) fn column_moments(x: &Matrix) -> (Vec<f64>, Vec<f64>) {
    let (n, d) = x.shape();
    let nf = n.max(1) as f64;
    let mut mean = vec![0.0; d];
    for row in x.iter_rows() {
        mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= nf);
    let mut var = vec![0.0; d];
    for row in x.iter_rows() {
        for c in 0..d {
            let dv = row[c] - mean[c];
            var[c] += dv * dv;
        }
    }
    var.iter_mut().for_each(|v| *v /= nf);
    (mean, var)
}

fn update_running(bn: &mut BatchNorm, mean: &[f64], var: &[f64], n: usize) {
    let m = bn.momentum;
    // Running variance tracks the unbiased estimate.
    let correction = if n > 1 { n as f64 / (n - 1) as f64 } else { 1.0 };
    for c in 0..bn.dim() {
        bn.running_mean[c] = (1.0 - m) * bn.running_mean[c] + m * mean[c];
        bn.running_var[c] = ((1.0 - m) * bn.running_var[c] + m * var[c] * correction).max(f64::MIN_POSITIVE);
    }
}
