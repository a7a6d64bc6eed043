//! The similarity evidence head: a small dual-branch network mapping an
//! image embedding and its class-similarity vector to a positive evidence
//! strength `λ`, with exact reverse-mode gradients written by hand.

mod config;
mod layers;
mod loss;
mod model;
mod train;

pub use config::{LossVariant, RegressionForm, SehConfig};
pub use layers::{BatchNorm, BlockGrad, Linear, LinearGrad, MlpBlock};
pub use loss::seh_loss;
pub use model::{DropoutMasks, Mode, SehBatchCache, SehGradients, SehModel};
pub use train::{entropy_targets, train_seh, TrainedSeh};
