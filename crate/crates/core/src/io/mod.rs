//! Persistence (datasets, model archives) and the synthetic feature generator.

pub mod archive;
mod dataset;
pub mod synthetic;

pub use archive::{load_model, save_model, ArchiveRecord, ModelArchive};
pub use dataset::{load_dataset, save_dataset, save_dataset_csv, DatasetFormat, FeatureDataset, Split};
pub use synthetic::{generate_synthetic, SyntheticCorpus, SyntheticOracle, SyntheticSpec};
