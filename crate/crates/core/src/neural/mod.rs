//! Initial-state encoders, stacked LSTM and linear head with exact
//! backpropagation through time and an Adam optimiser.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod lstm;
pub mod model;

pub use adam::{adam_step, AdamState, DEFAULT_LEARNING_RATE};
pub use checkpoint::Checkpoint;
pub use gradcheck::{gradient_check, GradCheckReport};
pub use lstm::{
    backward, encode_initial_state, forward, loss_and_gradient, lstm_cell_forward, model_forward, mse_loss, Forward,
};
pub use model::{Direction, Layout, ModelConfig, SequenceModel};
