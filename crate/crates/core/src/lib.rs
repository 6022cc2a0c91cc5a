//! Controllable lyric-to-melody composition toolkit.
//!
//! The crate is organized around a fixed pipeline:
//!
//! * [`score`] — the canonical in-memory song model, JSONL corpus I/O,
//!   synthetic corpus generation, and MIDI export.
//! * [`remi`] — bidirectional conversion between songs and aligned event-token
//!   streams, plus the token grammar used for constrained decoding.
//! * [`lyric`] — syllable-level tone and word-level part-of-speech controls.
//! * [`attributes`] — the 12 sentence-level statistical musical attributes and
//!   the equal-frequency quantizer that turns them into class indices.
//! * [`nn`] — a small deterministic reverse-mode autodiff layer (f64) with the
//!   operators needed by the models, Adam, and finite-difference checking.
//! * [`model`] — the conditioned sequence model: sentence semantic encoder,
//!   condition assembly, in-attention decoder, training, and nucleus-sampling
//!   generation.
//! * [`vq`] — the grouped-codebook VQ-VAE that produces learned per-sentence
//!   melody features.
//! * [`metrics`] — objective similarity metrics (PD/DD/MD), Spearman rank
//!   correlation, the controllability sweep, and the ablation harness.

pub mod attributes;
pub mod lyric;
pub mod model;
pub mod nn;
pub mod metrics;
pub mod remi;
pub mod score;
pub mod vq;
