//! Joint loss, gradient computation, optimizer steps, the iteration
//! schedule and partial restore.

mod config;
mod loss;
mod restore;
mod schedule;
mod step;

pub use config::TrainConfig;
pub use loss::{example_loss, joint_loss, LossBreakdown, Objective, Target};
pub use restore::{restore_partial, RestoreReport};
pub use schedule::{mix_seed, IntervalMeter, LogRecord, Schedule};
pub use step::{
    apply_update, batch_gradients, clip_global_norm, example_gradient, train_step, ExampleResult, Executor, Sequential,
};
