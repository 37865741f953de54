//! Dataset generation, training and evaluation of the full pipeline.

pub mod config;
pub mod dataset;
pub mod pipeline;
pub mod report;

pub use config::{ExperimentConfig, SplitSizes};
pub use dataset::{Dataset, MomentRecord, Split};
