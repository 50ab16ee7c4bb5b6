//! Linear C-SVM: L2-regularized hinge loss solved in the dual by coordinate
//! descent (the liblinear `-s 3` solver, without shrinking), one-vs-rest for
//! multiple classes. The bias is a constant feature `1` whose weight is
//! regularized like the others (liblinear `-B 1`).

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmConfig {
    pub cost: f64,
    /// Stop when `max PG - min PG` over a pass drops below this.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Seeds the per-pass coordinate permutation.
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            cost: 10.0,
            tolerance: 1e-4,
            max_iterations: 1000,
            seed: 0,
        }
    }
}

impl SvmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.cost > 0.0 && self.cost.is_finite()) {
            return Err(Error::InvalidConfig(format!("svm.cost must be positive, got {}", self.cost)));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidConfig(format!("svm.tolerance must be positive, got {}", self.tolerance)));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig("svm.max_iterations must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSvmModel {
    pub class_ids: Vec<String>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
    pub cost: f64,
}

/// Dual solution of one binary (one-vs-rest) subproblem.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryDual {
    pub alpha: Vec<f64>,
    /// `0.5 |w|^2 - sum(alpha)`, with `w` including the bias weight.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// `x / |x|_1`.
pub fn l1_normalize(x: &[f64]) -> Result<Vec<f64>> {
    let norm: f64 = x.iter().map(|v| v.abs()).sum();
    if !norm.is_finite() {
        return Err(Error::NonFiniteInput("l1_normalize".into()));
    }
    if norm == 0.0 {
        return Err(Error::InvalidInput("cannot L1-normalize a zero vector".into()));
    }
    Ok(x.iter().map(|v| v / norm).collect())
}

/// Solves `min_a 0.5 a'Qa - sum(a)`, `0 <= a <= C`, `Q_ij = y_i y_j x_i.x_j`
/// where `x` is augmented with a trailing 1. Returns the dual and `w` (bias last).
pub fn solve_binary(x: &[Vec<f64>], y: &[f64], config: &SvmConfig) -> Result<(BinaryDual, Vec<f64>)> {
    config.validate()?;
    let n = x.len();
    if n != y.len() {
        return Err(Error::dims("svm labels", n, y.len()));
    }
    let d = x.first().map_or(0, Vec::len);
    let c = config.cost;
    let mut w = vec![0.0; d + 1];
    let mut alpha = vec![0.0; n];
    let q: Vec<f64> = x.iter().map(|xi| xi.iter().map(|v| v * v).sum::<f64>() + 1.0).collect();
    let dot = |w: &[f64], xi: &[f64]| xi.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() + w[d];

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < config.max_iterations {
        iterations += 1;
        order.shuffle(&mut rng);
        let (mut pg_max, mut pg_min) = (f64::NEG_INFINITY, f64::INFINITY);
        for &i in &order {
            let g = y[i] * dot(&w, &x[i]) - 1.0;
            let pg = if alpha[i] == 0.0 {
                g.min(0.0)
            } else if alpha[i] == c {
                g.max(0.0)
            } else {
                g
            };
            pg_max = pg_max.max(pg);
            pg_min = pg_min.min(pg);
            if pg.abs() > 1e-12 {
                let old = alpha[i];
                alpha[i] = (old - g / q[i]).clamp(0.0, c);
                let step = (alpha[i] - old) * y[i];
                for (wj, xj) in w.iter_mut().zip(&x[i]) {
                    *wj += step * xj;
                }
                w[d] += step;
            }
        }
        if pg_max - pg_min < config.tolerance {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("svm dual coordinate descent hit {} iterations", config.max_iterations);
    }
    let objective = 0.5 * w.iter().map(|v| v * v).sum::<f64>() - alpha.iter().sum::<f64>();
    Ok((
        BinaryDual {
            alpha,
            objective,
            iterations,
            converged,
        },
        w,
    ))
}

/// One-vs-rest training. Class order is first appearance in `labels`.
pub fn train_csvm(x: &[Vec<f64>], labels: &[String], config: &SvmConfig) -> Result<LinearSvmModel> {
    Ok(train_csvm_detailed(x, labels, config)?.0)
}

pub fn train_csvm_detailed(
    x: &[Vec<f64>],
    labels: &[String],
    config: &SvmConfig,
) -> Result<(LinearSvmModel, Vec<BinaryDual>)> {
    config.validate()?;
    if x.len() != labels.len() {
        return Err(Error::dims("svm labels", x.len(), labels.len()));
    }
    let d = x.first().map_or(0, Vec::len);
    for (i, row) in x.iter().enumerate() {
        if row.len() != d {
            return Err(Error::dims(format!("svm example {i}"), d, row.len()));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput(format!("svm example {i}")));
        }
    }
    let mut class_ids: Vec<String> = Vec::new();
    for l in labels {
        if !class_ids.contains(l) {
            class_ids.push(l.clone());
        }
    }
    if class_ids.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "svm training needs at least 2 classes, got {}",
            class_ids.len()
        )));
    }
    let mut weights = Vec::with_capacity(class_ids.len());
    let mut biases = Vec::with_capacity(class_ids.len());
    let mut duals = Vec::with_capacity(class_ids.len());
    for class in &class_ids {
        let y: Vec<f64> = labels.iter().map(|l| if l == class { 1.0 } else { -1.0 }).collect();
        let (dual, mut w) = solve_binary(x, &y, config)?;
        biases.push(w.pop().expect("bias weight"));
        weights.push(w);
        duals.push(dual);
    }
    Ok((
        LinearSvmModel {
            class_ids,
            weights,
            biases,
            cost: config.cost,
        },
        duals,
    ))
}

impl LinearSvmModel {
    pub fn dim(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    pub fn decision_values(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::dims("svm input", self.dim(), x.len()));
        }
        Ok(self
            .weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| w.iter().zip(x).map(|(a, v)| a * v).sum::<f64>() + b)
            .collect())
    }

    /// Index of the highest score; ties go to the lowest index.
    pub fn predict_index(&self, x: &[f64]) -> Result<usize> {
        let scores = self.decision_values(x)?;
        let mut best = 0;
        for (i, s) in scores.iter().enumerate().skip(1) {
            if *s > scores[best] {
                best = i;
            }
        }
        Ok(best)
    }
}

pub fn predict_class<'m>(model: &'m LinearSvmModel, x: &[f64]) -> Result<&'m str> {
    Ok(&model.class_ids[model.predict_index(x)?])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn l1_normalization() {
        assert_eq!(l1_normalize(&[1.0, 3.0]).unwrap(), vec![0.25, 0.75]);
        let once = l1_normalize(&[0.2, 0.5, 0.3]).unwrap();
        let twice = l1_normalize(&once).unwrap();
        assert!(once.iter().zip(&twice).all(|(a, b)| (a - b).abs() < 1e-15));
        assert!(l1_normalize(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn two_points_are_separated() {
        let x = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let y = labels(&["a", "b"]);
        let m = train_csvm(&x, &y, &SvmConfig::default()).unwrap();
        assert_eq!(predict_class(&m, &x[0]).unwrap(), "a");
        assert_eq!(predict_class(&m, &x[1]).unwrap(), "b");
    }

    #[test]
    fn zero_weights_pick_first_class() {
        let m = LinearSvmModel {
            class_ids: labels(&["x", "y", "z"]),
            weights: vec![vec![0.0; 2]; 3],
            biases: vec![0.0; 3],
            cost: 10.0,
        };
        assert_eq!(predict_class(&m, &[0.3, 0.7]).unwrap(), "x");
        assert!(predict_class(&m, &[0.3]).is_err());
    }

    #[test]
    fn single_class_and_bad_input_rejected() {
        let x = vec![vec![1.0], vec![2.0]];
        assert!(train_csvm(&x, &labels(&["a", "a"]), &SvmConfig::default()).is_err());
        let x = vec![vec![1.0], vec![f64::NAN]];
        assert!(train_csvm(&x, &labels(&["a", "b"]), &SvmConfig::default()).is_err());
        let cfg = SvmConfig { cost: 0.0, ..Default::default() };
        assert!(train_csvm(&[vec![1.0], vec![2.0]], &labels(&["a", "b"]), &cfg).is_err());
    }
}
