//! Losses, optimiser, schedule and the training loop.

mod adam;
mod loss;
mod runner;
mod schedule;

pub use adam::{AdamConfig, AdamState};
pub use loss::{loss_mae, loss_mse, LossKind};
pub use runner::{iteration_rng, train_loop, BatchSource, LogEntry, TrainOutcome, Trainer, FINAL, LATEST, LOG_FILE, RESUME};
pub use schedule::{default_patch_sizes, Phase, PhasePlan, TrainSchedule};
