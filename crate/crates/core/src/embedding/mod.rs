//! The embedding model and its training loop.

pub mod loss;
pub mod mlp;
pub mod train;

pub use loss::{bce_loss, ece_loss};
pub use mlp::{Layer, MlpParams};
pub use train::{iwkr_forward_batch, loss_and_grad, train, ModelSelection, TrainReport, TrainingConfig};
