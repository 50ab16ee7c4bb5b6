//! Synthetic feature corpus with a known generative model.
//!
//! For class `c` with attribute values `s_a`:
//!
//! ```text
//! clean = max(0, mu_c + sum_a g_a(s_a) * v_{c,a}),   g_a(s) = s / max_a
//! x     = max(0, clean + N(0, sigma_c^2 I))
//! ```
//!
//! Directions `v_{c,a} = u_a + tilt_{c,a}` share a common component per
//! attribute plus a class-specific tilt. Tilts and class offsets
//! (`mu_c = base + offset_c`) live in a low-rank subspace orthogonal to every
//! `u_a`: the projection of `x` onto `u_a` depends on `s_a` alone (up to
//! noise and truncation), and models fitted on some classes transfer to the
//! others.
//! `sigma_c = noise * rms_a |v_{c,a}|`.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::dataset::{FeatureDataset, Split};
use crate::error::{Error, Result};
use crate::sample::AttributeSample;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeRange {
    pub name: String,
    pub min: f64,
    pub max: f64,
}

impl AttributeRange {
    pub fn new(name: impl Into<String>, min: f64, max: f64) -> Self {
        Self {
            name: name.into(),
            min,
            max,
        }
    }

    pub fn width(&self) -> f64 {
        self.max - self.min
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_classes: usize,
    /// The first `n_seen` classes are "seen"; the rest are held out.
    pub n_seen: usize,
    pub dim: usize,
    pub samples_per_class: usize,
    /// Fraction of each seen class used for training (by sample index).
    pub train_fraction: f64,
    pub attributes: Vec<AttributeRange>,
    /// Noise std as a multiple of the class's attribute-direction norm.
    pub noise: f64,
    /// Norm of the shared per-attribute direction.
    pub attribute_scale: f64,
    /// Norm of the class-specific tilt, relative to `attribute_scale`.
    pub tilt: f64,
    /// Norm of the class-specific prototype offset, relative to `attribute_scale`.
    pub class_spread: f64,
    /// Dimension of the subspace holding class offsets and tilts.
    pub class_rank: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_classes: 20,
            n_seen: 10,
            dim: 64,
            samples_per_class: 300,
            train_fraction: 0.8,
            attributes: vec![
                AttributeRange::new("depth", 0.2, 7.5),
                AttributeRange::new("pose", 0.0, 180.0),
            ],
            noise: 0.05,
            attribute_scale: 4.0,
            tilt: 0.3,
            class_spread: 0.6,
            class_rank: 4,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.dim < 8 {
            return bad(format!("synthetic.dim must be >= 8, got {}", self.dim));
        }
        if self.n_classes == 0 || self.n_seen > self.n_classes {
            return bad(format!(
                "synthetic.n_seen ({}) must not exceed n_classes ({}) and n_classes must be >= 1",
                self.n_seen, self.n_classes
            ));
        }
        if self.samples_per_class == 0 {
            return bad("synthetic.samples_per_class must be >= 1".into());
        }
        if !(self.train_fraction > 0.0 && self.train_fraction <= 1.0) {
            return bad(format!("synthetic.train_fraction must be in (0, 1], got {}", self.train_fraction));
        }
        if self.attributes.is_empty() || self.attributes.len() + self.class_rank > self.dim {
            return bad(format!(
                "synthetic.attributes ({}) plus class_rank ({}) must be between 1 and dim ({})",
                self.attributes.len(),
                self.class_rank,
                self.dim
            ));
        }
        if self.class_rank == 0 {
            return bad("synthetic.class_rank must be >= 1".into());
        }
        for (i, a) in self.attributes.iter().enumerate() {
            if !(a.min >= 0.0 && a.max > a.min && a.max.is_finite()) {
                return bad(format!(
                    "synthetic.attributes[{i}] ({}) needs 0 <= min < max, got [{}, {}]",
                    a.name, a.min, a.max
                ));
            }
            if self.attributes[..i].iter().any(|b| b.name == a.name) {
                return bad(format!("synthetic.attributes[{i}]: duplicate name `{}`", a.name));
            }
        }
        for (field, v) in [
            ("noise", self.noise),
            ("attribute_scale", self.attribute_scale),
            ("tilt", self.tilt),
            ("class_spread", self.class_spread),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("synthetic.{field} must be finite and >= 0, got {v}"));
            }
        }
        if self.attribute_scale == 0.0 {
            return bad("synthetic.attribute_scale must be > 0".into());
        }
        Ok(())
    }

    pub fn class_label(c: usize) -> String {
        format!("class{c:02}")
    }

    pub fn attribute_names(&self) -> Vec<String> {
        self.attributes.iter().map(|a| a.name.clone()).collect()
    }
}

#[derive(Debug, Clone)]
struct ClassModel {
    label: String,
    mean: Vec<f64>,
    /// One direction per attribute, in `spec.attributes` order.
    directions: Vec<Vec<f64>>,
    sigma: f64,
}

/// Ground truth for a generated corpus.
#[derive(Debug, Clone)]
pub struct SyntheticOracle {
    spec: SyntheticSpec,
    classes: Vec<ClassModel>,
}

/// A generated corpus split into seen-train, seen-test and unseen parts.
#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub seen_train: FeatureDataset,
    pub seen_test: FeatureDataset,
    pub unseen: FeatureDataset,
}

fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn scaled_to(mut v: Vec<f64>, len: f64) -> Vec<f64> {
    let n = norm(&v);
    v.iter_mut().for_each(|x| *x *= len / n);
    v
}

/// Generates the full corpus (split tag unspecified) and its oracle.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(FeatureDataset, SyntheticOracle)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let d = spec.dim;
    let scale = spec.attribute_scale;

    // shared attribute directions, mutually orthogonal
    let mut shared: Vec<Vec<f64>> = Vec::new();
    for _ in &spec.attributes {
        let mut v = gaussian_vec(&mut rng, d);
        for u in &shared {
            let dot: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum::<f64>() / (scale * scale);
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= dot * b);
        }
        shared.push(scaled_to(v, scale));
    }
    let base: Vec<f64> = (0..d).map(|_| rng.random_range(1.5..2.5)).collect();

    // Class-specific parts are combinations of `class_rank` shared factors
    // orthogonal to every `u_a`, so a projection onto `u_a` reads the
    // attribute for any class, and seen classes span the same factor space
    // as unseen ones.
    let mut factors: Vec<Vec<f64>> = Vec::new();
    for _ in 0..spec.class_rank {
        let mut v = gaussian_vec(&mut rng, d);
        for u in shared.iter().chain(&factors) {
            let uu: f64 = u.iter().map(|x| x * x).sum();
            let dot: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum::<f64>() / uu;
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= dot * b);
        }
        factors.push(scaled_to(v, 1.0));
    }
    let in_factor_space = |rng: &mut ChaCha8Rng, len: f64| {
        let coef = gaussian_vec(rng, factors.len());
        let mut v = vec![0.0; d];
        for (c, f) in coef.iter().zip(&factors) {
            v.iter_mut().zip(f).for_each(|(a, b)| *a += c * b);
        }
        scaled_to(v, len)
    };
    let classes: Vec<ClassModel> = (0..spec.n_classes)
        .map(|c| {
            let offset = in_factor_space(&mut rng, spec.class_spread * scale);
            let mean: Vec<f64> = base.iter().zip(&offset).map(|(b, o)| b + o).collect();
            let directions: Vec<Vec<f64>> = shared
                .iter()
                .map(|u| {
                    let t = in_factor_space(&mut rng, spec.tilt * scale);
                    u.iter().zip(&t).map(|(a, b)| a + b).collect()
                })
                .collect();
            let rms = (directions.iter().map(|v| norm(v).powi(2)).sum::<f64>() / directions.len() as f64).sqrt();
            ClassModel {
                label: SyntheticSpec::class_label(c),
                mean,
                directions,
                sigma: spec.noise * rms,
            }
        })
        .collect();
    let oracle = SyntheticOracle {
        spec: spec.clone(),
        classes,
    };

    let mut samples = Vec::with_capacity(spec.n_classes * spec.samples_per_class);
    for class in &oracle.classes {
        for _ in 0..spec.samples_per_class {
            let values: Vec<f64> = spec.attributes.iter().map(|a| rng.random_range(a.min..=a.max)).collect();
            let clean = oracle.clean(class, &values);
            let features = clean
                .iter()
                .map(|&x| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    (x + class.sigma * z).max(0.0)
                })
                .collect();
            let mut s = AttributeSample::new(features, class.label.clone());
            for (a, v) in spec.attributes.iter().zip(values) {
                s.attributes.insert(a.name.clone(), v);
            }
            samples.push(s);
        }
    }
    let mut ds = FeatureDataset::new(d, spec.attribute_names(), samples)?;
    ds.provenance = format!(
        "synthetic: {} classes ({} seen), D={}, {} per class, noise={}, seed={}",
        spec.n_classes, spec.n_seen, d, spec.samples_per_class, spec.noise, spec.seed
    );
    Ok((ds, oracle))
}

impl SyntheticOracle {
    pub fn spec(&self) -> &SyntheticSpec {
        &self.spec
    }

    pub fn class_labels(&self) -> Vec<String> {
        self.classes.iter().map(|c| c.label.clone()).collect()
    }

    pub fn seen_classes(&self) -> Vec<String> {
        self.class_labels()[..self.spec.n_seen].to_vec()
    }

    pub fn unseen_classes(&self) -> Vec<String> {
        self.class_labels()[self.spec.n_seen..].to_vec()
    }

    pub fn attribute_range(&self, name: &str) -> Option<&AttributeRange> {
        self.spec.attributes.iter().find(|a| a.name == name)
    }

    /// Per-coordinate noise standard deviation of a class.
    pub fn noise_sigma(&self, class: &str) -> Result<f64> {
        Ok(self.class(class)?.sigma)
    }

    fn class(&self, label: &str) -> Result<&ClassModel> {
        self.classes
            .iter()
            .find(|c| c.label == label)
            .ok_or_else(|| Error::InvalidInput(format!("unknown synthetic class `{label}`")))
    }

    fn clean(&self, class: &ClassModel, values: &[f64]) -> Vec<f64> {
        let mut x = class.mean.clone();
        for ((v, dir), a) in values.iter().zip(&class.directions).zip(&self.spec.attributes) {
            let g = v / a.max;
            x.iter_mut().zip(dir).for_each(|(xi, di)| *xi += g * di);
        }
        x.iter_mut().for_each(|xi| *xi = xi.max(0.0));
        x
    }

    /// Noise-free feature of `class` at the given attribute values.
    pub fn oracle_feature(&self, class: &str, attributes: &BTreeMap<String, f64>) -> Result<Vec<f64>> {
        let model = self.class(class)?;
        let values = self
            .spec
            .attributes
            .iter()
            .map(|a| {
                attributes
                    .get(&a.name)
                    .copied()
                    .ok_or_else(|| Error::InvalidInput(format!("oracle_feature: attribute `{}` not given", a.name)))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.clean(model, &values))
    }

    /// Least-squares inversion of the generative map on the coordinates of
    /// `x` that are not truncated at zero. Exact (to rounding) for noiseless
    /// samples.
    pub fn true_attributes(&self, class: &str, x: &[f64]) -> Result<BTreeMap<String, f64>> {
        let model = self.class(class)?;
        if x.len() != self.spec.dim {
            return Err(Error::dims("true_attributes", self.spec.dim, x.len()));
        }
        let k = model.directions.len();
        // normal equations over active coordinates, in g-space
        let mut ata = vec![vec![0.0; k]; k];
        let mut atb = vec![0.0; k];
        for j in (0..x.len()).filter(|&j| x[j] > 0.0) {
            let r = x[j] - model.mean[j];
            for p in 0..k {
                atb[p] += model.directions[p][j] * r;
                for q in 0..k {
                    ata[p][q] += model.directions[p][j] * model.directions[q][j];
                }
            }
        }
        let g = solve_spd(ata, atb)
            .ok_or_else(|| Error::InvalidInput(format!("true_attributes: too few active coordinates for `{class}`")))?;
        Ok(self
            .spec
            .attributes
            .iter()
            .zip(g)
            .map(|(a, g)| (a.name.clone(), g * a.max))
            .collect())
    }

    pub fn true_attribute(&self, class: &str, x: &[f64], attribute: &str) -> Result<f64> {
        self.true_attributes(class, x)?
            .remove(attribute)
            .ok_or_else(|| Error::InvalidInput(format!("unknown synthetic attribute `{attribute}`")))
    }

    /// Seen classes split per class by sample order into train/test; unseen
    /// classes whole.
    pub fn partition(&self, dataset: &FeatureDataset) -> SyntheticCorpus {
        let seen = dataset.filter_classes(&self.seen_classes());
        let (seen_train, seen_test) = seen.split_per_class(self.spec.train_fraction);
        let mut unseen = dataset.filter_classes(&self.unseen_classes());
        unseen.split = Split::Test;
        SyntheticCorpus {
            seen_train,
            seen_test,
            unseen,
        }
    }
}

/// Cholesky solve of a small symmetric positive-definite system.
fn solve_spd(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for j in 0..n {
        let d = a[j][j] - (0..j).map(|k| a[j][k] * a[j][k]).sum::<f64>();
        if !(d > 0.0) {
            return None;
        }
        a[j][j] = d.sqrt();
        for i in j + 1..n {
            a[i][j] = (a[i][j] - (0..j).map(|k| a[i][k] * a[j][k]).sum::<f64>()) / a[j][j];
        }
    }
    for i in 0..n {
        b[i] = (b[i] - (0..i).map(|k| a[i][k] * b[k]).sum::<f64>()) / a[i][i];
    }
    for i in (0..n).rev() {
        b[i] = (b[i] - (i + 1..n).map(|k| a[k][i] * b[k]).sum::<f64>()) / a[i][i];
    }
    Some(b)
}
