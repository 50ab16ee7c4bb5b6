//! Attribute-guided augmentation of feature vectors.
//!
//! An attribute regressor predicts an attribute strength (for example object
//! depth or pose) from a nonnegative feature vector. For every interval of
//! the attribute range and every desired target value an encoder-decoder is
//! trained, against the frozen regressor, to move features from that interval
//! to the target while staying close to the input. The resulting bank turns a
//! single labelled example into a handful of synthetic ones, which is
//! evaluated here with one-shot linear SVM classification and retrieval.

pub mod error;
pub mod eval;
pub mod grid;
pub mod io;
pub mod nn;
pub mod regressor;
pub mod sample;
pub mod svm;
pub mod synthesis;

pub use error::{Error, Result};
pub use regressor::{median_absolute_error, train_regressor, AttributeRegressor, RegressorTrainConfig};
pub use sample::AttributeSample;
