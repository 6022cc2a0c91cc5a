//! The conditioned melody sequence model.
//!
//! A causal transformer over the aligned event-token stream, steered by a
//! per-syllable condition vector that is injected into the hidden state
//! before every decoder layer ("in-attention"). The condition concatenates,
//! in fixed column order:
//!
//! 1. a lyric block: syllable tone embedding + word POS embedding + a
//!    sentence semantic embedding from a bidirectional encoder;
//! 2. song tags: key, emotion, and sentence structure embeddings;
//! 3. twelve musical-attribute class embeddings (quantized statistics);
//! 4. an optional learned per-sentence melody feature (e.g. from the
//!    [`crate::vq`] extractor), zero when absent.
//!
//! Condition rows are per syllable and are gathered per token via the
//! grammar's token→syllable map, so the condition advances exactly when a
//! syllable token is consumed — identically in training and inference.

pub(crate) mod checkpoint;
mod condition;
mod config;
mod decoder;
mod encoder;
mod infer;
pub(crate) mod layers;
mod request;
mod train;
mod vocab;

pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use condition::{condition_layout, ConditionBlock, SentenceCond, SongCond};
pub use config::{ConditionFlags, ModelConfig};
pub use decoder::forward_logits;
pub use infer::{generate, nucleus_sample, DecoderSession, GenerationOutput, SamplingParams};
pub use request::{resolve_request, ClassSpec, GenerationRequest, RequestSentence, ResolvedRequest};
pub use train::{
    init_params, item_loss, prepare_item, prepare_items, train, train_step, TrainConfig,
    TrainItem, TrainStats,
};
pub use vocab::{LyricVocab, LYRIC_SEQ, LYRIC_UNK};

use crate::attributes::AttributeError;
use crate::lyric::LyricError;
use crate::remi::RemiError;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Lyric(#[from] LyricError),
    #[error(transparent)]
    Remi(#[from] RemiError),
    #[error(transparent)]
    Attribute(#[from] AttributeError),
    #[error("invalid request: {0}")]
    BadRequest(String),
    #[error("sequence of {len} tokens exceeds the model budget of {budget}")]
    OverBudget { len: usize, budget: usize },
    #[error("generation hit the token budget of {budget} after {emitted} tokens without completing")]
    Incomplete { budget: usize, emitted: usize },
    #[error("non-finite loss at step {step}")]
    NonFinite { step: u64 },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}
