//! Central-difference verification of [`Network::backward`].
//!
//! The finite differences are taken on an independent double-double
//! re-implementation of the forward pass. In plain `f64` the rounding noise of
//! `(L(θ+h) - L(θ-h)) / 2h` is about `1e-11 |L|`, which swamps the `1e-8`
//! floor of the relative error for parameters whose gradient is (near) zero,
//! such as a Linear bias feeding a train-mode BatchNorm. Without that noise
//! the `h^2` truncation term dominates for poorly conditioned BatchNorm
//! batches, so the step-`h` and step-`h/2` differences are extrapolated.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::dd::Dd;
use super::{Activations, Gradients, Layer, Matrix, Mode, Network};
use crate::error::{Error, Result};

pub const FD_STEP: f64 = 1e-5;
pub const KINK_MARGIN: f64 = 1e-4;
const KINK_NUDGE: f64 = 1e-3;
const MAX_NUDGES: usize = 64;
const NUDGES_PER_MASK: usize = 8;

/// Row-major matrix of double-double values.
#[derive(Debug, Clone)]
pub struct DdMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<Dd>,
}

impl DdMatrix {
    pub fn from_matrix(m: &Matrix) -> Self {
        Self {
            rows: m.rows(),
            cols: m.cols(),
            data: m.data().iter().map(|&v| Dd::from(v)).collect(),
        }
    }

    pub fn get(&self, r: usize, c: usize) -> Dd {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[Dd] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// A scalar loss of the network output (and possibly its input).
pub trait Objective {
    /// Loss value and its gradient with respect to `output`.
    fn evaluate(&self, input: &Matrix, output: &Matrix) -> Result<(f64, Matrix)>;

    /// The same loss in double-double precision; the finite-difference reference.
    fn reference_loss(&self, input: &DdMatrix, output: &DdMatrix) -> Result<Dd>;

    /// Whether the loss itself has a kink within [`KINK_MARGIN`] at `output`
    /// (for losses that run their own piecewise-linear network).
    fn near_kink(&self, _input: &Matrix, _output: &Matrix) -> Result<bool> {
        Ok(false)
    }
}

/// Mean over rows of the squared Euclidean distance to `targets`.
#[derive(Debug, Clone)]
pub struct Mse {
    pub targets: Matrix,
}

impl Objective for Mse {
    fn evaluate(&self, _input: &Matrix, output: &Matrix) -> Result<(f64, Matrix)> {
        mse(output, &self.targets)
    }

    fn reference_loss(&self, _input: &DdMatrix, output: &DdMatrix) -> Result<Dd> {
        if (output.rows, output.cols) != self.targets.shape() {
            return Err(Error::dims("mse targets", output.data.len(), self.targets.data().len()));
        }
        let sum: Dd = output
            .data
            .iter()
            .zip(self.targets.data())
            .map(|(&o, &t)| {
                let e = o - Dd::from(t);
                e * e
            })
            .sum();
        Ok(sum / Dd::from(output.rows.max(1) as f64))
    }
}

pub fn mse(output: &Matrix, targets: &Matrix) -> Result<(f64, Matrix)> {
    if output.shape() != targets.shape() {
        return Err(Error::dims("mse targets", output.data().len(), targets.data().len()));
    }
    let n = output.rows().max(1) as f64;
    let mut grad = Matrix::zeros(output.rows(), output.cols());
    let mut loss = 0.0;
    for ((g, o), t) in grad.data_mut().iter_mut().zip(output.data()).zip(targets.data()) {
        let e = o - t;
        loss += e * e;
        *g = 2.0 * e / n;
    }
    Ok((loss / n, grad))
}

/// Identifies one scalar parameter: (layer, tensor, entry).
pub type ParamIndex = (usize, usize, usize);

/// Double-double forward pass, written independently of [`Network::forward`].
///
/// `masks[i]` supplies the keep-mask for dropout layer `i` (train mode);
/// `perturb` replaces one parameter with an exact double-double value.
pub fn reference_forward(
    net: &Network,
    batch: &DdMatrix,
    mode: Mode,
    masks: &[Option<Vec<f64>>],
    perturb: Option<(ParamIndex, Dd)>,
) -> DdMatrix {
    let param = |li: usize, pi: usize, j: usize| -> Dd {
        match perturb {
            Some(((l, p, k), v)) if (l, p, k) == (li, pi, j) => v,
            _ => Dd::from(net.layers()[li].params()[pi][j]),
        }
    };
    let mut x = batch.clone();
    for (li, layer) in net.layers().iter().enumerate() {
        x = match layer {
            Layer::Linear(l) => {
                let (n_in, n_out) = (l.input_dim(), l.output_dim());
                let mut data = Vec::with_capacity(x.rows * n_out);
                for r in 0..x.rows {
                    for o in 0..n_out {
                        let mut acc = param(li, 1, o);
                        for i in 0..n_in {
                            acc = acc + x.get(r, i) * param(li, 0, i * n_out + o);
                        }
                        data.push(acc);
                    }
                }
                DdMatrix {
                    rows: x.rows,
                    cols: n_out,
                    data,
                }
            }
            Layer::BatchNorm(bn) => {
                let (n, d) = (x.rows, x.cols);
                let mut out = x.clone();
                for c in 0..d {
                    let (mean, var) = match mode {
                        Mode::Train => {
                            let nf = Dd::from(n as f64);
                            let mean = (0..n).map(|r| x.get(r, c)).sum::<Dd>() / nf;
                            let var = (0..n)
                                .map(|r| {
                                    let dv = x.get(r, c) - mean;
                                    dv * dv
                                })
                                .sum::<Dd>()
                                / nf;
                            (mean, var)
                        }
                        Mode::Eval => (Dd::from(bn.running_mean[c]), Dd::from(bn.running_var[c])),
                    };
                    let denom = (var + Dd::from(bn.epsilon)).sqrt();
                    for r in 0..n {
                        let xhat = (x.get(r, c) - mean) / denom;
                        out.data[r * d + c] = param(li, 0, c) * xhat + param(li, 1, c);
                    }
                }
                out
            }
            Layer::Relu => {
                x.data.iter_mut().for_each(|v| *v = v.max_zero());
                x
            }
            Layer::Elu { alpha } => {
                for v in x.data.iter_mut() {
                    if !v.is_positive() {
                        *v = Dd::from(*alpha) * (v.exp() - Dd::ONE);
                    }
                }
                x
            }
            Layer::Dropout { .. } => {
                if let (Mode::Train, Some(Some(mask))) = (mode, masks.get(li)) {
                    x.data.iter_mut().zip(mask).for_each(|(v, &m)| *v = *v * Dd::from(m));
                }
                x
            }
        };
    }
    x
}

/// Analytic gradient of `objective` at the network's current parameters.
pub fn analytic_gradients(
    net: &Network,
    batch: &Matrix,
    objective: &dyn Objective,
    mode: Mode,
    seed: u64,
) -> Result<Gradients> {
    let acts = net.forward_detached(batch, mode, Some(seed))?;
    let (_, dout) = objective.evaluate(batch, acts.output())?;
    Ok(net.backward(&acts, &dout)?.0)
}

/// Central differences on the double-double reference at steps [`FD_STEP`]
/// and `FD_STEP / 2`, combined by one Richardson extrapolation step.
pub fn numeric_gradients(
    net: &Network,
    batch: &Matrix,
    objective: &dyn Objective,
    mode: Mode,
    seed: u64,
) -> Result<Gradients> {
    let acts = net.forward_detached(batch, mode, Some(seed))?;
    let masks: Vec<Option<Vec<f64>>> = (0..net.layers().len())
        .map(|i| acts.dropout_mask(i).map(<[f64]>::to_vec))
        .collect();
    let input = DdMatrix::from_matrix(batch);
    let h = Dd::from(FD_STEP);
    let mut grads = Gradients::zeros_like(net);
    for li in 0..grads.layers.len() {
        for pi in 0..grads.layers[li].len() {
            for j in 0..grads.layers[li][pi].len() {
                let theta = Dd::from(net.layers()[li].params()[pi][j]);
                let at = |v: Dd| -> Result<Dd> {
                    let out = reference_forward(net, &input, mode, &masks, Some(((li, pi, j), v)));
                    objective.reference_loss(&input, &out)
                };
                let central = |step: Dd| -> Result<Dd> { Ok((at(theta + step)? - at(theta - step)?) / (step + step)) };
                let coarse = central(h)?;
                let fine = central(h / Dd::from(2.0))?;
                // Richardson: cancels the h^2 truncation term of the central difference.
                let extrapolated = (Dd::from(4.0) * fine - coarse) / Dd::from(3.0);
                grads.layers[li][pi][j] = extrapolated.to_f64();
            }
        }
    }
    Ok(grads)
}

/// `max |a - n| / max(1e-8, |a| + |n|)` over all entries; 0 when there are none.
pub fn max_relative_error(analytic: &Gradients, numeric: &Gradients) -> f64 {
    analytic
        .iter()
        .zip(numeric.iter())
        .map(|(a, n)| (a - n).abs() / (a.abs() + n.abs()).max(1e-8))
        .fold(0.0, f64::max)
}

/// Moves `batch` until no ReLU/ELU input lies within `1e-4` of its kink.
///
/// Inputs are shifted by `±1e-3`. A pre-activation can be independent of the
/// input (a row fully zeroed by dropout leaves only the bias), so after a few
/// unsuccessful nudges the dropout seed is advanced as well. Returns the
/// batch and the seed to use.
pub fn avoid_kinks(
    net: &Network,
    batch: &Matrix,
    objective: &dyn Objective,
    mode: Mode,
    seed: u64,
) -> Result<(Matrix, u64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6b69_6e6b);
    let mut current = batch.clone();
    let mut mask_seed = seed;
    for attempt in 1..=MAX_NUDGES {
        let acts = net.forward_detached(&current, mode, Some(mask_seed))?;
        if !has_near_kink(net, &acts) && !objective.near_kink(&current, acts.output())? {
            return Ok((current, mask_seed));
        }
        for v in current.data_mut() {
            *v += if rng.random::<bool>() { KINK_NUDGE } else { -KINK_NUDGE };
        }
        if attempt % NUDGES_PER_MASK == 0 {
            mask_seed = mask_seed.wrapping_add(0x9e37_79b9_7f4a_7c15);
        }
    }
    Ok((current, mask_seed))
}

/// Whether any ReLU/ELU input of `acts` lies within [`KINK_MARGIN`] of 0.
pub fn has_near_kink(net: &Network, acts: &Activations) -> bool {
    net.layers().iter().enumerate().any(|(i, l)| {
        matches!(l, Layer::Relu | Layer::Elu { .. }) && acts.layer_input(i).data().iter().any(|v| v.abs() < KINK_MARGIN)
    })
}

/// Maximum relative error between backprop and central differences.
///
/// The batch is first nudged off activation kinks. `seed` fixes the dropout
/// masks so every perturbed evaluation sees the same function.
pub fn grad_check(net: &Network, batch: &Matrix, objective: &dyn Objective, mode: Mode, seed: u64) -> Result<f64> {
    let (batch, seed) = avoid_kinks(net, batch, objective, mode, seed)?;
    let analytic = analytic_gradients(net, &batch, objective, mode, seed)?;
    let numeric = numeric_gradients(net, &batch, objective, mode, seed)?;
    Ok(max_relative_error(&analytic, &numeric))
}
