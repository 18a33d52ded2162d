//! Configuration, training, inference, evaluation, gradient checking and
//! the ablation sweep.

mod ablate;
mod checkpoint;
mod config;
mod gradcheck;
mod infer;
mod train;

pub use ablate::{
    ablate, synthetic_splits, train_and_score, AblationReport, AblationRow, Variant,
    HELD_OUT_SEED_OFFSET, VARIANTS,
};
pub use checkpoint::{Checkpoint, StreamState};
pub use config::{Config, StreamMode};
pub use gradcheck::{gradcheck, gradcheck_with, GradCheckOutcome, GRADCHECK_MAX_DIM, GRADCHECK_TOL};
pub use infer::{detection_records, detections_from_records, evaluate, infer, infer_video};
pub use train::{initial_checkpoint, resume, sgd_step, train, EpochMetrics, TrainLog, TrainOutcome};
