//! Optimizers, the training loop and evaluation metrics.

mod metrics;
mod optim;
mod trainer;

pub use metrics::{accuracy, accuracy_by_scale, feature_distance, features, iou, predict, segmentation_iou, Sample};
pub use optim::{OptimizerKind, OptimizerState};
pub use trainer::{EpochRecord, StateEntry, TrainConfig, Trainer};
