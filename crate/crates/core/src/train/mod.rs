//! Offline training: loss, dropout, optimizer, gradient checks, checkpoints.

pub mod adam;
pub mod checkpoint;
pub mod dropout;
pub mod gradcheck;
pub mod loss;
pub mod trainer;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::Checkpoint;
pub use trainer::{train_offline, EpochLog, TrainConfig, TrainOutcome, TrainingLog};
