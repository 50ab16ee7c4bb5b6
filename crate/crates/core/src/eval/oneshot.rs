//! One-shot / few-shot recognition trials with and without synthesized features.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stats::wilcoxon_rank_sum;
use crate::error::{Error, Result};
use crate::io::FeatureDataset;
use crate::sample::AttributeSample;
use crate::svm::{l1_normalize, train_csvm, SvmConfig};
use crate::synthesis::{augment_with, SynthesisBank};

/// Samples grouped by class, classes in a fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassPool {
    pub classes: Vec<String>,
    pub samples: Vec<Vec<AttributeSample>>,
}

impl ClassPool {
    /// Groups by class in first-appearance order, keeping sample order.
    pub fn from_samples(samples: &[AttributeSample]) -> Self {
        let mut pool = ClassPool {
            classes: Vec::new(),
            samples: Vec::new(),
        };
        for s in samples {
            match pool.classes.iter().position(|c| *c == s.class_label) {
                Some(i) => pool.samples[i].push(s.clone()),
                None => {
                    pool.classes.push(s.class_label.clone());
                    pool.samples.push(vec![s.clone()]);
                }
            }
        }
        pool
    }

    pub fn from_dataset(ds: &FeatureDataset) -> Self {
        Self::from_samples(&ds.samples)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrialConfig {
    pub k_shot: usize,
    pub svm: SvmConfig,
    /// At most this many synthesized features per training instance (all when `None`).
    pub max_synthesized: Option<usize>,
}

impl Default for TrialConfig {
    fn default() -> Self {
        Self {
            k_shot: 1,
            svm: SvmConfig::default(),
            max_synthesized: None,
        }
    }
}

/// Accuracies of every variant in one trial, aligned with [`variant_names`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: usize,
    pub seed: u64,
    pub accuracies: Vec<f64>,
}

impl TrialResult {
    pub fn baseline(&self) -> f64 {
        self.accuracies[0]
    }

    /// Accuracy with every attribute's synthesized features.
    pub fn all_attributes(&self) -> f64 {
        *self.accuracies.last().expect("at least the baseline")
    }
}

/// Variants: the baseline, each attribute alone, and (with more than one
/// attribute) all attributes together. Each is the list of attributes used.
pub fn variants(bank: &SynthesisBank) -> Vec<Vec<String>> {
    let names = bank.attribute_names();
    let mut out = vec![Vec::new()];
    out.extend(names.iter().map(|n| vec![n.clone()]));
    if names.len() > 1 {
        out.push(names);
    }
    out
}

pub fn variant_names(bank: &SynthesisBank) -> Vec<String> {
    variants(bank)
        .iter()
        .map(|v| {
            if v.is_empty() {
                "baseline".to_owned()
            } else {
                v.iter().map(|a| format!("+{a}")).collect()
            }
        })
        .collect()
}

/// One trial: `k_shot` training instances per class drawn with `seed`, the
/// rest of the pool is the test set. Every variant trains an SVM on the same
/// instances plus the synthesized features of its attributes (labelled with
/// the source class); all features are L1-normalized.
pub fn one_shot_trial(
    pool: &ClassPool,
    bank: &SynthesisBank,
    config: &TrialConfig,
    trial: usize,
    seed: u64,
) -> Result<TrialResult> {
    config.svm.validate()?;
    if config.k_shot == 0 {
        return Err(Error::InvalidConfig("k_shot must be >= 1".into()));
    }
    if pool.classes.len() < 2 {
        return Err(Error::InvalidInput("one-shot trials need at least 2 classes".into()));
    }
    for (c, s) in pool.classes.iter().zip(&pool.samples) {
        if s.len() < config.k_shot + 1 {
            return Err(Error::InvalidInput(format!(
                "class `{c}` has {} samples; k_shot = {} needs at least {}",
                s.len(),
                config.k_shot,
                config.k_shot + 1
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train: Vec<(&AttributeSample, usize)> = Vec::new();
    let mut test: Vec<(&AttributeSample, usize)> = Vec::new();
    for (c, samples) in pool.samples.iter().enumerate() {
        let mut picked = sample(&mut rng, samples.len(), config.k_shot).into_vec();
        picked.sort_unstable();
        for (i, s) in samples.iter().enumerate() {
            if picked.binary_search(&i).is_ok() {
                train.push((s, c));
            } else {
                test.push((s, c));
            }
        }
    }
    let test_x = test
        .iter()
        .map(|(s, _)| l1_normalize(&s.features))
        .collect::<Result<Vec<_>>>()?;

    let svm = SvmConfig {
        seed,
        ..config.svm.clone()
    };
    let mut accuracies = Vec::new();
    for attrs in variants(bank) {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for (s, c) in &train {
            x.push(l1_normalize(&s.features)?);
            y.push(pool.classes[*c].clone());
            if attrs.is_empty() {
                continue;
            }
            let mut synth = augment_with(bank, &s.features, Some(&attrs))?;
            if let Some(cap) = config.max_synthesized {
                synth.truncate(cap);
            }
            for a in synth {
                // an all-zero synthesized vector carries no direction; skip it
                if let Ok(v) = l1_normalize(&a.features) {
                    x.push(v);
                    y.push(pool.classes[*c].clone());
                }
            }
        }
        let model = train_csvm(&x, &y, &svm)?;
        let mut correct = 0usize;
        for (xt, (_, c)) in test_x.iter().zip(&test) {
            if model.class_ids[model.predict_index(xt)?] == pool.classes[*c] {
                correct += 1;
            }
        }
        accuracies.push(correct as f64 / test.len() as f64);
    }
    Ok(TrialResult {
        trial,
        seed,
        accuracies,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub k_shot: usize,
    pub n_trials: usize,
    pub base_seed: u64,
    pub classes: Vec<String>,
    pub variants: Vec<String>,
    pub mean_accuracy: Vec<f64>,
    /// Two-sided rank-sum p-value of each variant's accuracies against the
    /// baseline's (1 for the baseline itself).
    pub p_values: Vec<f64>,
    pub trials: Vec<TrialResult>,
    pub config: TrialConfig,
}

/// Aggregates trials (in trial-index order, whatever order they arrive in).
pub fn aggregate(
    pool: &ClassPool,
    bank: &SynthesisBank,
    config: &TrialConfig,
    base_seed: u64,
    mut trials: Vec<TrialResult>,
) -> Result<EvalReport> {
    if trials.is_empty() {
        return Err(Error::InvalidInput("no trials to aggregate".into()));
    }
    trials.sort_by_key(|t| t.trial);
    let names = variant_names(bank);
    let n = trials.len() as f64;
    let column = |v: usize| trials.iter().map(|t| t.accuracies[v]).collect::<Vec<_>>();
    let baseline = column(0);
    let mean_accuracy = (0..names.len()).map(|v| column(v).iter().sum::<f64>() / n).collect();
    let p_values = (0..names.len())
        .map(|v| if v == 0 { Ok(1.0) } else { wilcoxon_rank_sum(&column(v), &baseline) })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport {
        k_shot: config.k_shot,
        n_trials: trials.len(),
        base_seed,
        classes: pool.classes.clone(),
        variants: names,
        mean_accuracy,
        p_values,
        trials,
        config: config.clone(),
    })
}

/// `n_trials` trials with seeds `base_seed + t`, run on the current rayon
/// pool. The report does not depend on how trials are scheduled.
pub fn run_trials(
    pool: &ClassPool,
    bank: &SynthesisBank,
    config: &TrialConfig,
    n_trials: usize,
    base_seed: u64,
) -> Result<EvalReport> {
    if n_trials == 0 {
        return Err(Error::InvalidConfig("n_trials must be >= 1".into()));
    }
    let trials = (0..n_trials)
        .into_par_iter()
        .map(|t| one_shot_trial(pool, bank, config, t, base_seed.wrapping_add(t as u64)))
        .collect::<Result<Vec<_>>>()?;
    aggregate(pool, bank, config, base_seed, trials)
}

impl EvalReport {
    /// Aligned plain-text table: one row per variant.
    pub fn to_table(&self) -> String {
        let width = self.variants.iter().map(String::len).max().unwrap_or(0).max(8);
        let mut out = format!(
            "{}-shot recognition over {} trials ({} classes)\n",
            self.k_shot,
            self.n_trials,
            self.classes.len()
        );
        out.push_str(&format!("{:<width$}  {:>9}  {:>10}\n", "variant", "accuracy", "p (vs base)"));
        for ((name, acc), p) in self.variants.iter().zip(&self.mean_accuracy).zip(&self.p_values) {
            let p = if name == "baseline" { "-".to_owned() } else { format!("{p:.3e}") };
            out.push_str(&format!("{name:<width$}  {:>8.2}%  {p:>10}\n", acc * 100.0));
        }
        out
    }
}
