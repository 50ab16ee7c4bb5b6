use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// A nonnegative feature vector with its class and attribute annotations.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeSample {
    pub features: Vec<f64>,
    pub class_label: String,
    pub attributes: BTreeMap<String, f64>,
}

impl AttributeSample {
    pub fn new(features: Vec<f64>, class_label: impl Into<String>) -> Self {
        Self {
            features,
            class_label: class_label.into(),
            attributes: BTreeMap::new(),
        }
    }

    pub fn with_attribute(mut self, name: impl Into<String>, value: f64) -> Self {
        self.attributes.insert(name.into(), value);
        self
    }

    pub fn attribute(&self, name: &str) -> Option<f64> {
        self.attributes.get(name).copied()
    }

    pub fn dim(&self) -> usize {
        self.features.len()
    }

    /// Checks the ingest invariants: finite nonnegative features and attributes.
    pub fn validate(&self, index: usize) -> Result<()> {
        if let Some((j, v)) = self.features.iter().enumerate().find(|(_, v)| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "sample {index}: feature {j} is {v}; features must be finite and >= 0"
            )));
        }
        if let Some((name, v)) = self.attributes.iter().find(|(_, v)| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "sample {index}: attribute `{name}` is {v}; attributes must be finite and >= 0"
            )));
        }
        Ok(())
    }
}

/// Values of `attribute` for every sample, failing on the first sample without it.
pub fn attribute_values(samples: &[AttributeSample], attribute: &str) -> Result<Vec<f64>> {
    samples
        .iter()
        .enumerate()
        .map(|(i, s)| s.attribute(attribute).ok_or_else(|| Error::MissingAttribute(attribute.to_owned(), i)))
        .collect()
}
