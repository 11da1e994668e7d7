//! Configuration, file formats, dataset generation and study runners.

pub mod budget;
pub mod config;
pub mod dataset;
pub mod report;
pub mod study;

pub use budget::CoherenceBudget;
pub use config::{DatasetConfig, ExperimentConfig, Split, TrajectoryConfig};
pub use dataset::{generate_dataset, Dataset, DatasetHeader};
