//! Synthesis functions φᵢᵏ and the bank that applies them.
//!
//! Each function is an encoder-decoder trained on the samples of interval
//! `i` to minimise
//!
//! ```text
//! mean_rows[ (γ̃(φ(x)) - t̃_k)^2 + λ |φ(x) - x|^2 ]
//! ```
//!
//! where `γ̃` is the frozen regressor network (Eval mode, before
//! de-standardization and clamping) and `t̃_k` the target in the same
//! standardized units. Gradients flow through γ into φ; γ is only borrowed.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::stats::pearson_rho;
use crate::grid::IntervalGrid;
use crate::nn::dd::Dd;
use crate::nn::gradcheck::{has_near_kink, reference_forward, DdMatrix};
use crate::nn::{adam_step, AdamState, BatchNorm, Layer, Linear, Matrix, Mode, Network, Objective};
use crate::regressor::{features_matrix, median_sorted, shuffled_batches, AttributeRegressor};
use crate::sample::AttributeSample;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub dropout: f64,
    pub lambda: f64,
    /// Encoder widths; `None` means `max(D/2, 4)` and `max(D/4, 4)`.
    pub hidden1: Option<usize>,
    pub hidden2: Option<usize>,
    pub seed: u64,
}

impl Default for SynthTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 128,
            learning_rate: 0.001,
            dropout: 0.25,
            lambda: 0.01,
            hidden1: None,
            hidden2: None,
            seed: 0,
        }
    }
}

impl SynthTrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.epochs < 1 {
            return bad("synthesis.epochs must be >= 1".into());
        }
        if self.batch_size < 2 {
            return bad(format!("synthesis.batch_size must be >= 2, got {}", self.batch_size));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("synthesis.learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("synthesis.dropout must be in [0, 1), got {}", self.dropout));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("synthesis.lambda must be finite and >= 0, got {}", self.lambda));
        }
        if self.hidden1 == Some(0) || self.hidden2 == Some(0) {
            return bad("synthesis.hidden1/hidden2 must be >= 1".into());
        }
        Ok(())
    }

    pub fn widths(&self, dim: usize) -> (usize, usize) {
        (
            self.hidden1.unwrap_or((dim / 2).max(4)),
            self.hidden2.unwrap_or((dim / 4).max(4)),
        )
    }
}

/// `Linear, BN, ELU, Dropout` x3 then `Linear(H1 -> D), ReLU`.
pub fn encoder_decoder_network<R: rand::Rng>(dim: usize, h1: usize, h2: usize, dropout: f64, rng: &mut R) -> Result<Network> {
    let mut layers = Vec::new();
    for (i, o) in [(dim, h1), (h1, h2), (h2, h1)] {
        layers.push(Layer::Linear(Linear::glorot(i, o, rng)));
        layers.push(Layer::BatchNorm(BatchNorm::new(o)));
        layers.push(Layer::elu());
        layers.push(Layer::Dropout { p: dropout });
    }
    layers.push(Layer::Linear(Linear::glorot(h1, dim, rng)));
    layers.push(Layer::Relu);
    Network::new(dim, layers)
}

/// One trained φᵢᵏ.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderDecoder {
    pub network: Network,
    pub attribute: String,
    pub interval: usize,
    pub bounds: (f64, f64),
    pub target_index: usize,
    pub target: f64,
    pub lambda: f64,
}

impl EncoderDecoder {
    pub fn dim(&self) -> usize {
        self.network.input_dim()
    }

    /// Eval-mode forward of every row.
    pub fn synthesize_batch(&self, batch: &Matrix) -> Result<Matrix> {
        self.network.predict(batch)
    }
}

pub fn synthesize(phi: &EncoderDecoder, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != phi.dim() {
        return Err(Error::dims("synthesis input", phi.dim(), x.len()));
    }
    Ok(phi.synthesize_batch(&Matrix::row_vector(x))?.into_data())
}

/// The composite (mismatch + λ·regularizer) loss through a frozen regressor.
#[derive(Debug, Clone, Copy)]
pub struct CompositeLoss<'a> {
    pub gamma: &'a AttributeRegressor,
    pub target: f64,
    pub lambda: f64,
}

/// Loss value split into its two mean terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossTerms {
    pub total: f64,
    pub mismatch: f64,
    pub regularizer: f64,
}

impl CompositeLoss<'_> {
    /// Loss terms and the gradient with respect to `output`.
    pub fn terms(&self, input: &Matrix, output: &Matrix) -> Result<(LossTerms, Matrix)> {
        if input.shape() != output.shape() {
            return Err(Error::dims("composite loss output", input.data().len(), output.data().len()));
        }
        let n = output.rows().max(1) as f64;
        let t = self.gamma.standardize(self.target);
        let acts = self.gamma.network().forward_eval(output)?;
        let z = acts.output();
        let mut dz = Matrix::zeros(z.rows(), 1);
        let mut mismatch = 0.0;
        for r in 0..z.rows() {
            let e = z.get(r, 0) - t;
            mismatch += e * e;
            dz.set(r, 0, 2.0 * e / n);
        }
        let mut grad = self.gamma.network().input_gradient(&acts, &dz)?;
        let mut reg = 0.0;
        for ((g, o), x) in grad.data_mut().iter_mut().zip(output.data()).zip(input.data()) {
            let d = o - x;
            reg += d * d;
            *g += 2.0 * self.lambda * d / n;
        }
        let (mismatch, regularizer) = (mismatch / n, reg / n);
        Ok((
            LossTerms {
                total: mismatch + self.lambda * regularizer,
                mismatch,
                regularizer,
            },
            grad,
        ))
    }
}

impl Objective for CompositeLoss<'_> {
    fn evaluate(&self, input: &Matrix, output: &Matrix) -> Result<(f64, Matrix)> {
        let (terms, grad) = self.terms(input, output)?;
        Ok((terms.total, grad))
    }

    fn reference_loss(&self, input: &DdMatrix, output: &DdMatrix) -> Result<Dd> {
        if (input.rows, input.cols) != (output.rows, output.cols) {
            return Err(Error::dims("composite loss output", input.data.len(), output.data.len()));
        }
        let z = reference_forward(self.gamma.network(), output, Mode::Eval, &[], None);
        let t = Dd::from(self.gamma.standardize(self.target));
        let mismatch: Dd = z.data.iter().map(|&v| (v - t) * (v - t)).sum();
        let reg: Dd = output
            .data
            .iter()
            .zip(&input.data)
            .map(|(&o, &x)| (o - x) * (o - x))
            .sum();
        Ok((mismatch + Dd::from(self.lambda) * reg) / Dd::from(output.rows.max(1) as f64))
    }

    fn near_kink(&self, _input: &Matrix, output: &Matrix) -> Result<bool> {
        let acts = self.gamma.network().forward_eval(output)?;
        Ok(has_near_kink(self.gamma.network(), &acts))
    }
}

/// Per-function training record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTrainLog {
    pub attribute: String,
    pub interval: usize,
    pub target_index: usize,
    pub subset_size: usize,
    /// Mean (over batches) of the composite loss per epoch.
    pub epoch_loss: Vec<f64>,
    /// Mean mismatch term per epoch.
    pub epoch_mismatch: Vec<f64>,
}

impl SynthTrainLog {
    pub fn final_loss(&self) -> f64 {
        self.epoch_loss.last().copied().unwrap_or(f64::NAN)
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of function `(attribute, i, k)`; independent of training order.
pub fn function_seed(seed: u64, attribute: &str, interval: usize, target_index: usize) -> u64 {
    let mut h = splitmix(seed);
    for b in attribute.bytes() {
        h = splitmix(h ^ u64::from(b));
    }
    h = splitmix(h ^ interval as u64);
    splitmix(h ^ ((target_index as u64) << 32))
}

/// Trains φ for `target` on the samples of interval `interval` of `grid`.
/// Returns it (used in Eval mode from here on) with its loss log.
pub fn train_synthesis_fn(
    subset: &[&AttributeSample],
    grid: &IntervalGrid,
    interval: usize,
    target_index: usize,
    gamma: &AttributeRegressor,
    config: &SynthTrainConfig,
) -> Result<(EncoderDecoder, SynthTrainLog)> {
    config.validate()?;
    if gamma.attribute() != grid.attribute {
        return Err(Error::InvalidInput(format!(
            "regressor predicts `{}` but the grid is over `{}`",
            gamma.attribute(),
            grid.attribute
        )));
    }
    if interval >= grid.len() || target_index >= grid.targets.len() {
        return Err(Error::InvalidInput(format!(
            "function ({interval}, {target_index}) outside a {}x{} grid",
            grid.len(),
            grid.targets.len()
        )));
    }
    if subset.is_empty() {
        return Err(Error::EmptyIntervals {
            attribute: grid.attribute.clone(),
            intervals: vec![interval],
        });
    }
    if subset.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "interval {interval} of `{}` has a single training sample; batch normalization needs 2",
            grid.attribute
        )));
    }
    for (n, s) in subset.iter().enumerate() {
        if s.attribute(&grid.attribute).is_none() {
            return Err(Error::MissingAttribute(grid.attribute.clone(), n));
        }
    }
    let owned: Vec<AttributeSample> = subset.iter().map(|s| (*s).clone()).collect();
    let x = features_matrix(&owned)?;
    if x.cols() != gamma.input_dim() {
        return Err(Error::dims("synthesis training features", gamma.input_dim(), x.cols()));
    }

    let seed = function_seed(config.seed, &grid.attribute, interval, target_index);
    let mut init_rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(seed);
    shuffle_rng.set_stream(1);
    let mut mask_rng = ChaCha8Rng::seed_from_u64(seed);
    mask_rng.set_stream(2);

    let (h1, h2) = config.widths(x.cols());
    let mut net = encoder_decoder_network(x.cols(), h1, h2, config.dropout, &mut init_rng)?;
    // start the decoder at the subset's mean feature instead of at 0
    let (mean, _) = crate::nn::column_moments(&x);
    if let Some(Layer::Linear(last)) = net.layers_mut().iter_mut().rev().find(|l| matches!(l, Layer::Linear(_))) {
        last.bias = mean;
    }
    let mut adam = AdamState::new(&net, config.learning_rate);
    let target = grid.targets[target_index];
    let loss = CompositeLoss {
        gamma,
        target,
        lambda: config.lambda,
    };
    let batch_size = config.batch_size.min(x.rows());

    let mut log = SynthTrainLog {
        attribute: grid.attribute.clone(),
        interval,
        target_index,
        subset_size: x.rows(),
        epoch_loss: Vec::with_capacity(config.epochs),
        epoch_mismatch: Vec::with_capacity(config.epochs),
    };
    for _ in 0..config.epochs {
        let (mut total, mut mismatch, mut rows) = (0.0, 0.0, 0usize);
        for idx in shuffled_batches(x.rows(), batch_size, &mut shuffle_rng) {
            let xb = x.select_rows(&idx);
            let acts = net.forward(&xb, Mode::Train, Some(mask_rng.next_u64()))?;
            let (terms, dout) = loss.terms(&xb, acts.output())?;
            let (grads, _) = net.backward(&acts, &dout)?;
            adam_step(&mut net, &grads, &mut adam)?;
            let w = idx.len() as f64;
            total += terms.total * w;
            mismatch += terms.mismatch * w;
            rows += idx.len();
        }
        log.epoch_loss.push(total / rows as f64);
        log.epoch_mismatch.push(mismatch / rows as f64);
    }
    log::debug!(
        "φ[{}][{interval}][{target_index}] (t = {target}): loss {:.5} -> {:.5}",
        grid.attribute,
        log.epoch_loss[0],
        log.final_loss()
    );
    let phi = EncoderDecoder {
        network: net,
        attribute: grid.attribute.clone(),
        interval,
        bounds: grid.intervals[interval],
        target_index,
        target,
        lambda: config.lambda,
    };
    Ok((phi, log))
}

/// The functions of one attribute, indexed `i * T + k`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeBank {
    pub grid: IntervalGrid,
    pub gamma: AttributeRegressor,
    pub functions: Vec<EncoderDecoder>,
}

impl AttributeBank {
    pub fn function(&self, interval: usize, target_index: usize) -> &EncoderDecoder {
        &self.functions[interval * self.grid.targets.len() + target_index]
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SynthesisBank {
    pub attributes: Vec<AttributeBank>,
}

/// One synthesized feature and where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Augmented {
    pub features: Vec<f64>,
    pub attribute: String,
    pub interval: usize,
    pub target_index: usize,
    pub target: f64,
}

impl SynthesisBank {
    pub fn function_count(&self) -> usize {
        self.attributes.iter().map(|a| a.functions.len()).sum()
    }

    pub fn attribute(&self, name: &str) -> Option<&AttributeBank> {
        self.attributes.iter().find(|a| a.grid.attribute == name)
    }

    pub fn attribute_names(&self) -> Vec<String> {
        self.attributes.iter().map(|a| a.grid.attribute.clone()).collect()
    }

    /// Input dimension, if the bank has any function.
    pub fn dim(&self) -> Option<usize> {
        self.attributes.first().map(|a| a.gamma.input_dim())
    }
}

/// Trains all `I x T` functions of every attribute, in parallel.
///
/// Every grid needs a regressor for the same attribute, and every interval
/// must have training samples; both are checked before anything is trained.
pub fn train_bank(
    samples: &[AttributeSample],
    grids: &[IntervalGrid],
    gammas: &[AttributeRegressor],
    config: &SynthTrainConfig,
) -> Result<(SynthesisBank, Vec<SynthTrainLog>)> {
    config.validate()?;
    let mut plans = Vec::new();
    for grid in grids {
        let gamma = gammas
            .iter()
            .find(|g| g.attribute() == grid.attribute)
            .ok_or_else(|| Error::InvalidInput(format!("no regressor for attribute `{}`", grid.attribute)))?;
        let subsets = grid.partition_training(samples)?;
        let empty: Vec<usize> = (0..subsets.len()).filter(|&i| subsets[i].is_empty()).collect();
        if !empty.is_empty() {
            return Err(Error::EmptyIntervals {
                attribute: grid.attribute.clone(),
                intervals: empty,
            });
        }
        if let Some(i) = subsets.iter().position(|s| s.len() < 2) {
            return Err(Error::InvalidInput(format!(
                "interval {i} of `{}` has a single training sample; batch normalization needs 2",
                grid.attribute
            )));
        }
        plans.push((grid, gamma, subsets));
    }

    let jobs: Vec<(usize, usize, usize)> = plans
        .iter()
        .enumerate()
        .flat_map(|(a, (grid, _, _))| {
            (0..grid.len()).flat_map(move |i| (0..grid.targets.len()).map(move |k| (a, i, k)))
        })
        .collect();
    let trained = jobs
        .par_iter()
        .map(|&(a, i, k)| {
            let (grid, gamma, subsets) = &plans[a];
            train_synthesis_fn(&subsets[i], grid, i, k, gamma, config)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut bank = SynthesisBank::default();
    let mut logs = Vec::with_capacity(trained.len());
    let mut trained = trained.into_iter();
    for (grid, gamma, _) in &plans {
        let n = grid.len() * grid.targets.len();
        let mut functions = Vec::with_capacity(n);
        for (phi, log) in trained.by_ref().take(n) {
            functions.push(phi);
            logs.push(log);
        }
        bank.attributes.push(AttributeBank {
            grid: (*grid).clone(),
            gamma: (*gamma).clone(),
            functions,
        });
    }
    Ok((bank, logs))
}

/// Selection rule: for every interval containing the (clamped) prediction
/// `t̂` and every target outside that interval, apply φᵢᵏ. Only attributes
/// in `attributes` are used (all when `None`).
pub fn augment_with(bank: &SynthesisBank, x: &[f64], attributes: Option<&[String]>) -> Result<Vec<Augmented>> {
    let mut out = Vec::new();
    for ab in &bank.attributes {
        if attributes.is_some_and(|names| !names.contains(&ab.grid.attribute)) {
            continue;
        }
        let t_hat = ab.gamma.predict_attribute(x)?;
        for i in ab.grid.containing_intervals(t_hat) {
            for (k, &t) in ab.grid.targets.iter().enumerate() {
                if ab.grid.contains(i, t) {
                    continue;
                }
                out.push(Augmented {
                    features: synthesize(ab.function(i, k), x)?,
                    attribute: ab.grid.attribute.clone(),
                    interval: i,
                    target_index: k,
                    target: t,
                });
            }
        }
    }
    Ok(out)
}

pub fn augment(bank: &SynthesisBank, x: &[f64]) -> Result<Vec<Augmented>> {
    augment_with(bank, x, None)
}

/// Fidelity of the bank on one class and attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassFidelity {
    pub class: String,
    pub seen: bool,
    pub attribute: String,
    /// Number of (sample, φ) applications.
    pub applications: usize,
    pub mean_rho: f64,
    /// Median over applications of `|γ(φᵢᵏ(x)) - t_k|`.
    pub median_abs_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankEvaluation {
    pub rows: Vec<ClassFidelity>,
    /// Per attribute, pooled over applications: (attribute, seen, mean ρ, median error).
    pub pooled: Vec<(String, bool, f64, f64)>,
}

/// Applies the selection rule to every test sample and measures identity
/// preservation (Pearson ρ between x and φ(x)) and attribute accuracy
/// (`|γ(φ(x)) - t_k|`) per class. Classes listed in `seen_classes` are
/// reported as seen.
pub fn evaluate_bank(bank: &SynthesisBank, testset: &[AttributeSample], seen_classes: &[String]) -> Result<BankEvaluation> {
    if testset.is_empty() {
        return Err(Error::InvalidInput("evaluate_bank needs a nonempty test set".into()));
    }
    // (class, attribute) -> (rhos, errors), in first-appearance class order
    let per_sample = testset
        .par_iter()
        .map(|s| -> Result<Vec<(String, f64, f64)>> {
            augment(bank, &s.features)?
                .into_iter()
                .map(|a| {
                    let ab = bank.attribute(&a.attribute).expect("augment only emits bank attributes");
                    let rho = pearson_rho(&s.features, &a.features).unwrap_or(0.0);
                    let err = (ab.gamma.predict_attribute(&a.features)? - a.target).abs();
                    Ok((a.attribute, rho, err))
                })
                .collect()
        })
        .collect::<Result<Vec<_>>>()?;

    let mut classes: Vec<&str> = Vec::new();
    for s in testset {
        if !classes.contains(&s.class_label.as_str()) {
            classes.push(&s.class_label);
        }
    }
    let mut rows = Vec::new();
    let mut pooled = Vec::new();
    for attribute in bank.attribute_names() {
        let mut pools: [(Vec<f64>, Vec<f64>); 2] = Default::default();
        for class in &classes {
            let seen = seen_classes.iter().any(|c| c == class);
            let (mut rhos, mut errs) = (Vec::new(), Vec::new());
            for (s, apps) in testset.iter().zip(&per_sample) {
                if s.class_label != *class {
                    continue;
                }
                for (a, rho, err) in apps {
                    if *a == attribute {
                        rhos.push(*rho);
                        errs.push(*err);
                    }
                }
            }
            if rhos.is_empty() {
                continue;
            }
            pools[seen as usize].0.extend(&rhos);
            pools[seen as usize].1.extend(&errs);
            rows.push(ClassFidelity {
                class: class.to_string(),
                seen,
                attribute: attribute.clone(),
                applications: rhos.len(),
                mean_rho: mean(&rhos),
                median_abs_error: median(errs),
            });
        }
        for (seen, (rhos, errs)) in pools.into_iter().enumerate().rev() {
            if !rhos.is_empty() {
                pooled.push((attribute.clone(), seen == 1, mean(&rhos), median(errs)));
            }
        }
    }
    Ok(BankEvaluation { rows, pooled })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    median_sorted(&v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;
    use crate::io::{generate_synthetic, SyntheticSpec};
    use crate::regressor::{train_regressor, RegressorTrainConfig};

    fn corpus() -> Vec<AttributeSample> {
        let spec = SyntheticSpec {
            n_classes: 3,
            n_seen: 3,
            dim: 12,
            samples_per_class: 40,
            seed: 4,
            ..SyntheticSpec::default()
        };
        generate_synthetic(&spec).unwrap().0.samples
    }

    fn gamma(samples: &[AttributeSample]) -> AttributeRegressor {
        let cfg = RegressorTrainConfig {
            epochs: 5,
            batch_size: 40,
            hidden: 8,
            ..RegressorTrainConfig::default()
        };
        train_regressor(samples, "depth", &cfg).unwrap()
    }

    fn quick(lambda: f64) -> SynthTrainConfig {
        SynthTrainConfig {
            epochs: 6,
            batch_size: 32,
            lambda,
            ..SynthTrainConfig::default()
        }
    }

    #[test]
    fn widths_floor_at_four() {
        let c = SynthTrainConfig::default();
        assert_eq!(c.widths(64), (32, 16));
        assert_eq!(c.widths(8), (4, 4));
        let c = SynthTrainConfig { hidden1: Some(9), ..c };
        assert_eq!(c.widths(64), (9, 16));
    }

    #[test]
    fn function_seeds_differ_by_key() {
        let a = function_seed(0, "depth", 1, 2);
        assert_eq!(a, function_seed(0, "depth", 1, 2));
        assert_ne!(a, function_seed(0, "depth", 2, 1));
        assert_ne!(a, function_seed(0, "pose", 1, 2));
        assert_ne!(a, function_seed(1, "depth", 1, 2));
    }

    #[test]
    fn mismatch_falls_without_regularizer() {
        let samples = corpus();
        let g = gamma(&samples);
        let grid = build_grid("depth", 0.0, 4.0, 3.5, 7.5, &[6.0]).unwrap();
        let subsets = grid.partition_training(&samples).unwrap();
        let cfg = SynthTrainConfig { epochs: 15, ..quick(0.0) };
        let (_, log) = train_synthesis_fn(&subsets[0], &grid, 0, 0, &g, &cfg).unwrap();
        assert!(log.epoch_mismatch.last().unwrap() < &log.epoch_mismatch[0], "{:?}", log.epoch_mismatch);
        assert!(log.epoch_loss.iter().all(|l| l.is_finite()));
    }

    #[test]
    fn gamma_is_untouched_and_training_is_deterministic() {
        let samples = corpus();
        let g = gamma(&samples);
        let before = g.clone();
        let grid = build_grid("depth", 0.0, 4.0, 3.5, 7.5, &[1.0, 6.0]).unwrap();
        let (a, logs_a) = train_bank(&samples, &[grid.clone()], &[g.clone()], &quick(0.01)).unwrap();
        let (b, logs_b) = train_bank(&samples, &[grid], &[g.clone()], &quick(0.01)).unwrap();
        assert_eq!(g, before);
        assert_eq!(a, b);
        assert_eq!(logs_a, logs_b);
        assert_eq!(a.function_count(), 4);
        let phi = a.attribute("depth").unwrap().function(1, 0);
        assert_eq!((phi.interval, phi.target_index, phi.target), (1, 0, 1.0));
    }

    #[test]
    fn synthesized_features_are_nonnegative() {
        let samples = corpus();
        let g = gamma(&samples);
        let grid = build_grid("depth", 0.0, 4.0, 3.5, 7.5, &[1.0, 6.0]).unwrap();
        let (bank, _) = train_bank(&samples, &[grid], &[g], &quick(0.01)).unwrap();
        for s in samples.iter().take(20) {
            for a in augment(&bank, &s.features).unwrap() {
                assert_eq!(a.features.len(), 12);
                assert!(a.features.iter().all(|v| *v >= 0.0 && v.is_finite()));
                let (l, h) = bank.attribute("depth").unwrap().grid.intervals[a.interval];
                assert!(a.target < l || a.target > h);
            }
        }
    }

    #[test]
    fn empty_intervals_are_all_reported_before_training() {
        let samples = corpus();
        let g = gamma(&samples);
        // intervals beyond the data: [20, 21], [20.5, 21.5]
        let grid = build_grid("depth", 0.0, 1.0, 0.5, 21.5, &[1.0]).unwrap();
        match train_bank(&samples, &[grid.clone()], &[g], &quick(0.01)) {
            Err(Error::EmptyIntervals { attribute, intervals }) => {
                assert_eq!(attribute, "depth");
                let expect: Vec<usize> = (0..grid.len())
                    .filter(|&i| !samples.iter().any(|s| grid.contains(i, s.attribute("depth").unwrap())))
                    .collect();
                assert!(!expect.is_empty());
                assert_eq!(intervals, expect);
            }
            other => panic!("expected EmptyIntervals, got {other:?}"),
        }
    }

    #[test]
    fn undersized_or_mismatched_inputs_are_rejected() {
        let samples = corpus();
        let g = gamma(&samples);
        let grid = build_grid("depth", 0.0, 4.0, 3.5, 7.5, &[1.0]).unwrap();
        let one = [&samples[0]];
        assert!(matches!(
            train_synthesis_fn(&one, &grid, 0, 0, &g, &quick(0.01)),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            train_synthesis_fn(&[], &grid, 0, 0, &g, &quick(0.01)),
            Err(Error::EmptyIntervals { .. })
        ));
        let pose = build_grid("pose", 0.0, 90.0, 45.0, 180.0, &[10.0]).unwrap();
        let refs: Vec<&AttributeSample> = samples.iter().collect();
        assert!(train_synthesis_fn(&refs, &pose, 0, 0, &g, &quick(0.01)).is_err());
        assert!(train_bank(&samples, &[pose], &[g], &quick(0.01)).is_err());
        assert!(SynthTrainConfig { dropout: 1.0, ..quick(0.01) }.validate().is_err());
        assert!(SynthTrainConfig { lambda: -1.0, ..quick(0.01) }.validate().is_err());
    }
}
