//! Training objective and the small-scale training loop.

mod data;
mod loss;
mod objective;
mod trainer;

pub use data::load_examples;
pub use loss::{
    combined_loss, multires_loss, multires_loss_with, oversuppression_loss,
    oversuppression_loss_grad, spectral_loss, spectral_loss_grad, LossBreakdown, LossWeights,
    COMPRESSION, MR_WINDOWS_MS,
};
pub use objective::{example_gradient, example_loss, TrainExample};
pub use trainer::{
    mean_loss, toy_train, CheckpointDir, EpochRecord, TrainConfig, TrainHistory, TrainOutcome,
};
