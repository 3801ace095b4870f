//! Tiny vision-conditioned caption model trained from scratch.
//!
//! A patch encoder turns the image into a memory sequence; a causal decoder
//! with cross-attention predicts the caption left to right.

pub mod beam;
pub mod check;
pub mod checkpoint;
pub mod graph;
pub mod params;
pub mod tensor;
pub mod train;
pub mod transformer;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vocab::RESERVED;

pub use beam::generate_caption;
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use params::ModelParams;
pub use tensor::{Matrix, Scalar};
pub use train::{Batch, Example, LinearDecay, OptimizerState, TrainSettings};
pub use transformer::Model;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub patch_size: usize,
    pub max_caption_len: usize,
    pub canvas_size: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            vocab_size: 64,
            d_model: 64,
            n_heads: 4,
            encoder_layers: 2,
            decoder_layers: 2,
            patch_size: 16,
            max_caption_len: 16,
            canvas_size: 64,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.d_model == 0 || self.n_heads == 0 || self.patch_size == 0 || self.canvas_size == 0 {
            return fail("model dimensions must be positive".into());
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return fail(format!("d_model {} is not divisible by n_heads {}", self.d_model, self.n_heads));
        }
        if !self.canvas_size.is_multiple_of(self.patch_size) {
            return fail(format!(
                "canvas_size {} is not divisible by patch_size {}",
                self.canvas_size, self.patch_size
            ));
        }
        if self.vocab_size <= RESERVED.len() {
            return fail(format!(
                "vocab_size {} leaves no room beyond the {} reserved tokens",
                self.vocab_size,
                RESERVED.len()
            ));
        }
        if self.max_caption_len == 0 {
            return fail("max_caption_len must be positive".into());
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn patches_per_side(&self) -> usize {
        self.canvas_size / self.patch_size
    }

    pub fn memory_len(&self) -> usize {
        self.patches_per_side() * self.patches_per_side()
    }

    pub fn patch_dim(&self) -> usize {
        self.patch_size * self.patch_size * 3
    }

    pub fn mlp_dim(&self) -> usize {
        4 * self.d_model
    }
}
