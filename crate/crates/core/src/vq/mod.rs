//! Grouped-codebook VQ-VAE over per-sentence melodies.
//!
//! A bidirectional encoder reads one sentence's token stream and emits a
//! latent split into `groups` equal slices; each slice is vector-quantized
//! against a single codebook shared by all groups. A small in-attention
//! decoder reconstructs the token stream from the quantized latent, so the
//! codes end up describing the melody itself. The quantized latents are the
//! "learned feature" block consumed by [`crate::model`].

mod extract;
mod net;
mod quantize;
mod train;

pub use extract::{
    extract_features, format_features, parse_features, sentence_feature, FeatureSet,
    SentenceFeature,
};
pub use net::{encode_sentence_latent, init_vq_params};
pub use quantize::{nearest_code, quantize_grouped};
pub use train::{
    sentence_streams, train_vqvae, vq_step, VqCheckpoint, VqStats, VqTrainConfig, VqTrainState,
    VQ_CHECKPOINT_VERSION,
};

use serde::{Deserialize, Serialize};

use crate::remi::RemiError;

#[derive(Debug, thiserror::Error)]
pub enum VqError {
    #[error(transparent)]
    Remi(#[from] RemiError),
    #[error("no sentences to train on")]
    EmptyCorpus,
    #[error("sentence stream of {len} tokens exceeds the budget of {budget}")]
    OverBudget { len: usize, budget: usize },
    #[error("non-finite loss at step {step}")]
    NonFinite { step: u64 },
    #[error("feature file: {0}")]
    Parse(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// VQ-VAE hyperparameters. `d_latent` must match the main model's `d_lyric`
/// for the features to be usable as its learned condition block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VqConfig {
    pub layers: usize,
    pub heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    /// Latent width; split into `groups` equal slices.
    pub d_latent: usize,
    pub groups: usize,
    /// Rows in the shared codebook.
    pub codebook_size: usize,
    /// Commitment-loss weight.
    pub beta: f64,
    /// Longest per-sentence token stream accepted.
    pub max_tokens: usize,
}

impl VqConfig {
    pub fn full() -> VqConfig {
        VqConfig {
            layers: 4,
            heads: 8,
            d_model: 512,
            d_ff: 2048,
            d_latent: 128,
            groups: 4,
            codebook_size: 2048,
            beta: 0.25,
            max_tokens: 1024,
        }
    }

    pub fn toy() -> VqConfig {
        VqConfig {
            layers: 1,
            heads: 2,
            d_model: 32,
            d_ff: 64,
            d_latent: 32,
            groups: 4,
            codebook_size: 16,
            beta: 0.25,
            max_tokens: 512,
        }
    }

    /// Width of one group slice.
    pub fn group_width(&self) -> usize {
        self.d_latent / self.groups
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.d_model % self.heads != 0 {
            return Err(format!("d_model {} not divisible by heads {}", self.d_model, self.heads));
        }
        if self.d_latent % self.groups != 0 {
            return Err(format!("d_latent {} not divisible by groups {}", self.d_latent, self.groups));
        }
        if self.codebook_size == 0 || self.groups == 0 || self.d_latent == 0 {
            return Err("codebook_size, groups, d_latent must be positive".into());
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(format!("beta must be a nonnegative finite number, got {}", self.beta));
        }
        Ok(())
    }
}
