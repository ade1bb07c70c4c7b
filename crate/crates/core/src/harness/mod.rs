//! Experiment configuration, protocols, checkpoints, reports and property suites.

pub mod checkpoint;
pub mod checks;
pub mod config;
pub mod experiment;
pub mod report;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use checks::{all_checks, CheckOutcome};
pub use config::{ArchConfig, ExperimentConfig, MnistConfig, ModelKind, Precision, SegmentDataConfig, TaskKind};
pub use experiment::{run_classification, run_segmentation, MnistSplits, ShapesSplits};
pub use report::{MetricsRecord, RangeIou};
