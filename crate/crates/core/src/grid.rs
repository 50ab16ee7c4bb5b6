//! Overlapping sliding-window intervals over an attribute and its target grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sample::AttributeSample;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalGrid {
    pub attribute: String,
    /// Closed intervals `[l_i, h_i]`, sorted by `l_i`.
    pub intervals: Vec<(f64, f64)>,
    pub targets: Vec<f64>,
    pub range: (f64, f64),
}

/// Depth targets 0.5, 1.0, ..., 5.5 m (T = 11).
pub fn default_depth_targets() -> Vec<f64> {
    (1..=11).map(|k| 0.5 * k as f64).collect()
}

/// Pose targets in degrees (T = 7).
pub fn default_pose_targets() -> Vec<f64> {
    vec![45.0, 70.0, 95.0, 120.0, 145.0, 170.0, 180.0]
}

/// Intervals `[l0 + j*step, h0 + j*step]` for `j = 0, 1, ...` up to the first
/// `j` with `h0 + j*step >= range_max`.
pub fn build_grid(
    attribute: impl Into<String>,
    l0: f64,
    h0: f64,
    step: f64,
    range_max: f64,
    targets: &[f64],
) -> Result<IntervalGrid> {
    let attribute = attribute.into();
    let bad = |m: String| Err(Error::InvalidConfig(format!("grid `{attribute}`: {m}")));
    if !(l0.is_finite() && h0.is_finite() && l0 < h0) {
        return bad(format!("need l0 < h0, got [{l0}, {h0}]"));
    }
    if !(step > 0.0 && step.is_finite()) {
        return bad(format!("step must be positive, got {step}"));
    }
    if !range_max.is_finite() {
        return bad(format!("range_max must be finite, got {range_max}"));
    }
    if targets.is_empty() {
        return bad("targets must not be empty".into());
    }
    if targets.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
        return bad("targets must be finite and >= 0".into());
    }
    if targets.windows(2).any(|w| w[0] >= w[1]) {
        return bad("targets must be strictly increasing".into());
    }
    // a range_max below h0 degenerates to the single first interval
    let mut intervals = Vec::new();
    let mut j = 0usize;
    loop {
        let shift = j as f64 * step;
        intervals.push((l0 + shift, h0 + shift));
        if h0 + shift >= range_max {
            break;
        }
        j += 1;
    }
    Ok(IntervalGrid {
        attribute,
        intervals,
        targets: targets.to_vec(),
        range: (l0, range_max.max(h0)),
    })
}

impl IntervalGrid {
    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn contains(&self, i: usize, s: f64) -> bool {
        let (l, h) = self.intervals[i];
        l <= s && s <= h
    }

    /// Indices of intervals containing `s`; outside every interval, the single
    /// nearest one by boundary distance.
    pub fn containing_intervals(&self, s: f64) -> Vec<usize> {
        let hits: Vec<usize> = (0..self.intervals.len()).filter(|&i| self.contains(i, s)).collect();
        if !hits.is_empty() || self.intervals.is_empty() {
            return hits;
        }
        let distance = |&(l, h): &(f64, f64)| if s < l { l - s } else { s - h };
        let nearest = self
            .intervals
            .iter()
            .enumerate()
            .min_by(|a, b| distance(a.1).total_cmp(&distance(b.1)))
            .map(|(i, _)| i)
            .expect("nonempty grid");
        vec![nearest]
    }

    /// Every sample goes to every interval containing its attribute value
    /// (no clamping here: out-of-range samples go nowhere).
    pub fn partition_training<'a>(&self, samples: &'a [AttributeSample]) -> Result<Vec<Vec<&'a AttributeSample>>> {
        let mut subsets = vec![Vec::new(); self.intervals.len()];
        for (n, s) in samples.iter().enumerate() {
            let v = s
                .attribute(&self.attribute)
                .ok_or_else(|| Error::MissingAttribute(self.attribute.clone(), n))?;
            for (i, subset) in subsets.iter_mut().enumerate() {
                if self.contains(i, v) {
                    subset.push(s);
                }
            }
        }
        Ok(subsets)
    }

    /// Subset sizes of [`partition_training`](Self::partition_training).
    pub fn subset_sizes(&self, samples: &[AttributeSample]) -> Result<Vec<usize>> {
        Ok(self.partition_training(samples)?.iter().map(Vec::len).collect())
    }
}
