//! Circular azimuth loss, Adam, early stopping and the training loop.

mod adam;
mod loss;
mod stopping;
mod train;

pub use adam::{adam_update, AdamState, BETA1, BETA2, EPSILON};
pub use loss::{angular_difference, circular_mse_loss, MAX_LOSS};
pub use stopping::{EarlyStopping, StopDecision};
pub use train::{evaluate_loss, gather_batch, predict, train, EpochRecord, TrainConfig, TrainOutcome};
