//! Toy flow-matching video transformer: a small diffusion transformer with
//! exposure-mask and prompt conditioning, LoRA adapters, mask-guided
//! cross-attention blending at inference, and an Euler sampler.

pub mod cfa;
pub mod checkpoint;
pub mod data;
pub mod gradcheck;
pub mod model;
pub mod sample;
pub mod tensor;
pub mod train;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite values in {0}")]
    NonFinite(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Color(#[from] hdrforge_core::color::ColorError),
    #[error(transparent)]
    Mask(#[from] hdrforge_core::mask::MaskError),
    #[error(transparent)]
    Prompt(#[from] hdrforge_core::prompt::PromptError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
