//! Small fully connected noise-prediction network with a hand-written
//! backward pass and Adam.

pub mod model;
pub mod train;

pub use model::{time_embedding, Architecture, Dense, DenoiserModel, NoisePredictor, TIME_FEATURES};
pub use train::{
    adam_step, loss_and_grad, loss_and_grad_prepared, smoothed_ends, train, Adam, Gradients,
    Objective, TrainBatch, TrainConfig, TrainingSet,
};
