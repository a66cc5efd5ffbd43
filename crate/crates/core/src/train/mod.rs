//! Loss, optimizer, learning-rate schedule, training loop and checkpoints.

mod checkpoint;
mod optim;
mod trainer;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, LOSS_TAIL};
pub use optim::{adam_step, mse, plateau_lr, AdamState, PlateauScheduler, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use trainer::{
    evaluate_loss, sample_gradients, train, StepRecord, TrainConfig, TrainEvent, TrainOutcome, DEFAULT_LR,
};
