//! Feed-forward feature extractor with a unified base+novel classifier,
//! hand-written backpropagation, optimizers and the learning-rate schedule.

pub mod checkpoint;
mod network;
mod optim;
mod schedule;

pub use network::{ema_params, Activation, Forward, Gradients, Linear, Network, Tape};
pub use optim::{OptimizerKind, OptimizerState};
pub use schedule::LrSchedule;

/// Anything that exposes its trainable values as flat slices in a fixed order.
pub trait Params<T> {
    fn param_slices(&self) -> Vec<&[T]>;
    fn param_slices_mut(&mut self) -> Vec<&mut [T]>;

    fn param_count(&self) -> usize {
        self.param_slices().iter().map(|s| s.len()).sum()
    }
}
