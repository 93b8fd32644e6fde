//! Encoder-decoder transformer with pluggable decoder attention backends.

mod batch;
mod config;
mod model;
pub mod params;
mod train;

pub use batch::{Batch, Example};
pub use config::{Backend, ModelConfig, Variant};
pub use model::{
    backward, forward, positional_encoding, sequence_log_prob, token_accuracy, ForwardOutput, Model,
};
pub use params::{init_parameters, FeatureMaps, Gradients, Parameters};
pub use train::{dev_loss, train, train_with_callback, Adam, TrainConfig, TrainReport};
