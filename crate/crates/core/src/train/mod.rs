//! Optimisation, the mini-batch training loop and checkpoint files.

mod checkpoint;
mod optimizer;
mod trainer;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointMeta};
pub use optimizer::{adamw_step, AdamWConfig, OptimizerState};
pub use trainer::{
    evaluate, train, train_with_state, Divergence, EpochRecord, EvalReport, Sample, Target, Task, TrainConfig,
    TrainReport,
};
