//! BERT-shaped encoder with a pooled regression ("time series prediction")
//! head.
//!
//! Post-norm encoder layers (`LN(x + Attn(x))`, `LN(y + FFN(y))`) over learned
//! token and position embeddings. The head zeroes padded rows of the final
//! hidden states, average-pools the `T × hidden` grid with a `k × k` window and
//! stride `s`, and maps the flattened result through a GELU MLP to one scalar.
//!
//! Everything is `f64`. Gradients are exact reverse mode, see [`gradients`].

mod backward;
mod config;
mod forward;
mod weights;

pub(crate) use backward::batch_gradient;
pub use backward::{gradients, sample_gradient, BatchGradient};
pub use config::ModelConfig;
pub use forward::{
    attention, encode, gelu, gelu_grad, layer_norm, pool_grid, predict, tsp_head, HiddenStates,
};
pub use weights::{init_model, LayerWeights, ModelWeights};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("token sequence has length {got}, model expects {expected}")]
    SequenceLength { expected: usize, got: usize },
    #[error("token id {id} out of range for vocabulary of {vocab_size}")]
    TokenOutOfRange { id: u32, vocab_size: usize },
    #[error("non-finite loss {loss} for target {target} (prediction {prediction})")]
    NonFiniteLoss {
        loss: f64,
        target: f64,
        prediction: f64,
    },
    #[error("tensor mismatch: {0}")]
    TensorMismatch(String),
}
