//! Numerical core: LoRA adapters with analytic gradients and gradient
//! accumulation, and SelfExtend attention on a small decoder.

pub mod attention;
pub mod lora;
pub mod toy;
pub mod train;

use thiserror::Error;

pub use attention::{
    causal_attention, multi_head_selfextend, selfextend_attention, selfextend_position_map,
    selfextend_weights, AttentionConfig,
};
pub use lora::{LoraAdapter, LoraGradients};
pub use toy::{AttentionMode, ToyConfig, ToyDecoder};
pub use train::{
    accumulate_and_step, CrossEntropy, LoraTrainer, Loss, MeanSquaredError, MicroBatch, TrainConfig,
};

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("key position {key} lies after query position {query}")]
    CausalityViolation { query: usize, key: usize },
    #[error("mapped positions reach {bound}, beyond the pretraining window {pretrain_window}")]
    InadmissibleConfig { bound: f64, pretrain_window: usize },
    #[error("sequence of {len} tokens exceeds the {window}-token window")]
    ContextOverflow { len: usize, window: usize },
    #[error("adapter file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
