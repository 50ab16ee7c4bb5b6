//! Nearest-neighbour retrieval of synthesized features against originals.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stats::r_squared;
use crate::error::{Error, Result};
use crate::sample::AttributeSample;

/// A synthesized feature with the class of its source and its target value.
#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub features: Vec<f64>,
    pub class: String,
    pub target: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalRow {
    pub class: String,
    pub queries: usize,
    pub top1: f64,
    /// Clamped to [0, 1].
    pub r_squared: f64,
    pub raw_r_squared: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReport {
    pub attribute: String,
    pub rows: Vec<RetrievalRow>,
}

impl RetrievalReport {
    pub fn mean_top1(&self) -> f64 {
        self.rows.iter().map(|r| r.top1).sum::<f64>() / self.rows.len() as f64
    }

    pub fn mean_r_squared(&self) -> f64 {
        self.rows.iter().map(|r| r.r_squared).sum::<f64>() / self.rows.len() as f64
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the Euclidean nearest gallery sample (lowest index on ties).
pub fn nearest(gallery: &[AttributeSample], x: &[f64]) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (i, g) in gallery.iter().enumerate() {
        let d = squared_distance(&g.features, x);
        if d < best.0 {
            best = (d, i);
        }
    }
    best.1
}

/// Per query class: Top-1 (neighbour has the source class) and R² of the
/// neighbours' `attribute` values regressed on the query targets.
pub fn retrieval_eval(queries: &[Query], gallery: &[AttributeSample], attribute: &str) -> Result<RetrievalReport> {
    if queries.is_empty() || gallery.is_empty() {
        return Err(Error::InvalidInput("retrieval needs nonempty queries and gallery".into()));
    }
    let d = gallery[0].dim();
    if let Some(q) = queries.iter().find(|q| q.features.len() != d) {
        return Err(Error::dims("retrieval query", d, q.features.len()));
    }
    let neighbours: Vec<usize> = queries.par_iter().map(|q| nearest(gallery, &q.features)).collect();

    let mut classes: Vec<&str> = Vec::new();
    for q in queries {
        if !classes.contains(&q.class.as_str()) {
            classes.push(&q.class);
        }
    }
    let mut rows = Vec::with_capacity(classes.len());
    for class in classes {
        let (mut hits, mut targets, mut found) = (0usize, Vec::new(), Vec::new());
        for (q, &n) in queries.iter().zip(&neighbours) {
            if q.class != class {
                continue;
            }
            let g = &gallery[n];
            if g.class_label == q.class {
                hits += 1;
            }
            targets.push(q.target);
            found.push(
                g.attribute(attribute)
                    .ok_or_else(|| Error::MissingAttribute(attribute.to_owned(), n))?,
            );
        }
        let raw = r_squared(&targets, &found)?;
        rows.push(RetrievalRow {
            class: class.to_owned(),
            queries: targets.len(),
            top1: hits as f64 / targets.len() as f64,
            r_squared: raw.clamp(0.0, 1.0),
            raw_r_squared: raw,
        });
    }
    Ok(RetrievalReport {
        attribute: attribute.to_owned(),
        rows,
    })
}
