//! VQ-VAE training: reconstruction NLL through the decoder plus codebook and
//! commitment losses, with a straight-through estimator across the
//! quantization step.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::net::{encode_sentence_latent, init_vq_params, recon_logits_node};
use super::quantize::quantize_grouped;
use super::{VqConfig, VqError};
use crate::model::checkpoint::{load_versioned, save_versioned, WrapError};
use crate::nn::{adam_step, lr_schedule, AdamState, Graph, ParamStore, ScheduleConfig, Tensor};
use crate::remi::{encode_ids, tokenize_sentence};
use crate::score::SongRecord;

pub const VQ_CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VqTrainConfig {
    pub steps: u64,
    /// Sentences per optimizer step (gradient accumulation).
    pub batch_size: usize,
    pub seed: u64,
    pub schedule: ScheduleConfig,
    pub clip_norm: Option<f64>,
    /// A code unused for this many steps is reseeded from a fresh encoder
    /// output.
    pub reseed_after: u64,
    pub log_every: u64,
}

impl Default for VqTrainConfig {
    fn default() -> VqTrainConfig {
        VqTrainConfig {
            steps: 1000,
            batch_size: 8,
            seed: 0,
            schedule: ScheduleConfig::default(),
            clip_norm: Some(1.0),
            reseed_after: 500,
            log_every: 50,
        }
    }
}

/// Per-step training telemetry.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VqStats {
    pub step: u64,
    /// Mean reconstruction NLL per token.
    pub recon: f64,
    /// Mean codebook loss (‖e − sg(z)‖²).
    pub codebook: f64,
    /// Mean commitment loss before the β weight (‖z − sg(e)‖²).
    pub commit: f64,
    pub lr: f64,
    /// Teacher-forced next-token accuracy over the batch.
    pub accuracy: f64,
    /// Codes reseeded at this step.
    pub reseeded: usize,
}

/// Mutable bookkeeping that is not part of the learned parameters: per-code
/// last-use step and whether the codebook has been seeded from data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VqTrainState {
    pub last_used: Vec<u64>,
    pub data_seeded: bool,
}

impl VqTrainState {
    pub fn new(cfg: &VqConfig) -> VqTrainState {
        VqTrainState { last_used: vec![0; cfg.codebook_size], data_seeded: false }
    }
}

/// Tokenizes every sentence of every song as a self-contained stream,
/// dropping streams longer than the model budget.
pub fn sentence_streams(songs: &[SongRecord], cfg: &VqConfig) -> Result<Vec<Vec<usize>>, VqError> {
    let mut out = Vec::new();
    for song in songs {
        for sentence in &song.sentences {
            let tokens = tokenize_sentence(sentence)?;
            if tokens.len() <= cfg.max_tokens {
                out.push(encode_ids(&tokens));
            }
        }
    }
    if out.is_empty() {
        return Err(VqError::EmptyCorpus);
    }
    Ok(out)
}

/// Overwrites every codebook row with an encoder-output group slice from the
/// batch (cycled, with a small jitter so duplicated slices stay distinct).
fn seed_codebook_from(latents: &[Vec<f64>], store: &mut ParamStore, cfg: &VqConfig, rng: &mut ChaCha8Rng) {
    let width = cfg.group_width();
    let mut slices: Vec<&[f64]> = Vec::new();
    for z in latents {
        for gidx in 0..cfg.groups {
            slices.push(&z[gidx * width..(gidx + 1) * width]);
        }
    }
    assert!(!slices.is_empty(), "cannot seed the codebook from an empty batch");
    let codebook = store.get_mut("vq.codebook");
    for r in 0..cfg.codebook_size {
        let src = slices[r % slices.len()];
        for (dst, &s) in codebook.row_mut(r).iter_mut().zip(src) {
            *dst = s + rng.gen_range(-1e-3..1e-3);
        }
    }
}

/// One optimizer step over a batch of sentence streams.
///
/// Per sentence: encode → grouped nearest-code quantization → causal
/// reconstruction of the same stream conditioned on the quantized latent.
/// The straight-through estimator passes the reconstruction gradient from
/// the quantized latent back to the encoder unchanged; the codebook is pulled
/// toward encoder outputs by the codebook loss, and the encoder toward its
/// codes by the β-weighted commitment loss.
pub fn vq_step(
    store: &mut ParamStore,
    adam: &mut AdamState,
    cfg: &VqConfig,
    tcfg: &VqTrainConfig,
    state: &mut VqTrainState,
    batch: &[&Vec<usize>],
    lr: f64,
    rng: &mut ChaCha8Rng,
) -> Result<VqStats, VqError> {
    assert!(!batch.is_empty(), "vq_step: empty batch");
    let step = adam.step_count() + 1;
    let scale = 1.0 / batch.len() as f64;
    store.zero_grads();

    // Seed the codebook from real encoder outputs before the first update so
    // no code starts in a region the encoder never visits.
    if !state.data_seeded {
        let mut latents = Vec::with_capacity(batch.len());
        for ids in batch {
            let mut g = Graph::new();
            let z = encode_sentence_latent(&mut g, store, cfg, ids);
            latents.push(g.value(z).row(0).to_vec());
        }
        seed_codebook_from(&latents, store, cfg, rng);
        state.data_seeded = true;
    }

    let (mut recon_sum, mut cb_sum, mut commit_sum) = (0.0, 0.0, 0.0);
    let (mut hits, mut preds) = (0usize, 0usize);
    let mut batch_latents: Vec<Vec<f64>> = Vec::with_capacity(batch.len());

    for ids in batch {
        let n = ids.len();
        assert!(n >= 2, "vq_step: degenerate sentence stream");
        let mut g = Graph::new();

        let z = encode_sentence_latent(&mut g, store, cfg, ids);
        let z_vals = g.value(z).row(0).to_vec();
        let (codes, zq_vals) = quantize_grouped(&z_vals, store.get("vq.codebook"), cfg.groups);
        for &c in &codes {
            state.last_used[c] = step;
        }
        batch_latents.push(z_vals.clone());

        // Straight-through: forward value is the quantized latent, backward
        // gradient flows to the encoder as if quantization were identity.
        let jump: Vec<f64> = zq_vals.iter().zip(&z_vals).map(|(q, v)| q - v).collect();
        let jump = g.input(Tensor::from_vec(1, cfg.d_latent, jump));
        let zq = g.add(z, jump);

        let logits = recon_logits_node(&mut g, store, cfg, &ids[..n - 1], zq);
        let targets = &ids[1..];
        for (row, &want) in (0..n - 1).zip(targets) {
            let r = g.value(logits).row(row);
            let argmax = r.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
            hits += usize::from(argmax == want);
            preds += 1;
        }
        let recon = g.cross_entropy_masked(logits, targets, &vec![true; targets.len()]);

        // Codebook loss: pull the chosen codes toward the (detached) encoder
        // output. Gradient reaches only `vq.codebook`.
        let codebook = g.param(store, "vq.codebook");
        let chosen: Vec<_> = codes.iter().map(|&c| g.gather_rows(codebook, &[c])).collect();
        let e_rows = g.concat_cols(&chosen);
        let z_detached = g.input(Tensor::from_vec(1, cfg.d_latent, z_vals.clone()));
        let cb_diff = g.sub(e_rows, z_detached);
        let cb_loss = g.sum_sq(cb_diff);

        // Commitment loss: pull the encoder toward the (detached) codes.
        let e_detached = g.input(Tensor::from_vec(1, cfg.d_latent, zq_vals));
        let commit_diff = g.sub(z, e_detached);
        let commit_loss = g.sum_sq(commit_diff);

        recon_sum += g.value(recon).item();
        cb_sum += g.value(cb_loss).item();
        commit_sum += g.value(commit_loss).item();

        let commit_weighted = g.scale(commit_loss, cfg.beta);
        let aux = g.add(cb_loss, commit_weighted);
        let total = g.add(recon, aux);
        let total = g.scale(total, scale);
        g.backward(total, store);
    }

    let stats_loss = (recon_sum + cb_sum + cfg.beta * commit_sum) * scale;
    if !stats_loss.is_finite() {
        return Err(VqError::NonFinite { step });
    }
    if let Some(max_norm) = tcfg.clip_norm {
        let norm = store.grad_norm();
        if norm > max_norm {
            store.scale_grads(max_norm / norm);
        }
    }
    adam_step(store, adam, lr);

    // Reseed codes that have gone unused for too long with fresh encoder
    // outputs, and drop their stale optimizer momentum.
    let mut reseeded = Vec::new();
    if step > tcfg.reseed_after {
        let width = cfg.group_width();
        for code in 0..cfg.codebook_size {
            if step - state.last_used[code] >= tcfg.reseed_after {
                let z = &batch_latents[rng.gen_range(0..batch_latents.len())];
                let gidx = rng.gen_range(0..cfg.groups);
                let src = &z[gidx * width..(gidx + 1) * width];
                let codebook = store.get_mut("vq.codebook");
                for (dst, &s) in codebook.row_mut(code).iter_mut().zip(src) {
                    *dst = s + rng.gen_range(-1e-3..1e-3);
                }
                state.last_used[code] = step;
                reseeded.push(code);
            }
        }
        adam.reset_rows("vq.codebook", &reseeded);
    }

    Ok(VqStats {
        step,
        recon: recon_sum * scale,
        codebook: cb_sum * scale,
        commit: commit_sum * scale,
        lr,
        accuracy: hits as f64 / preds.max(1) as f64,
        reseeded: reseeded.len(),
    })
}

/// Trains a VQ-VAE from scratch over per-sentence token streams.
pub fn train_vqvae(
    cfg: &VqConfig,
    tcfg: &VqTrainConfig,
    streams: &[Vec<usize>],
    mut on_step: impl FnMut(&VqStats),
) -> Result<(ParamStore, AdamState, VqTrainState, Vec<VqStats>), VqError> {
    if streams.is_empty() {
        return Err(VqError::EmptyCorpus);
    }
    let mut store = init_vq_params(cfg, tcfg.seed);
    let mut adam = AdamState::new();
    let mut state = VqTrainState::new(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(tcfg.seed ^ 0x76_71);
    let mut history = Vec::with_capacity(tcfg.steps as usize);
    for _ in 0..tcfg.steps {
        let batch: Vec<&Vec<usize>> = (0..tcfg.batch_size.min(streams.len()))
            .map(|_| &streams[rng.gen_range(0..streams.len())])
            .collect();
        let lr = lr_schedule(adam.step_count() + 1, &tcfg.schedule);
        let stats = vq_step(&mut store, &mut adam, cfg, tcfg, &mut state, &batch, lr, &mut rng)?;
        on_step(&stats);
        if stats.step % tcfg.log_every == 0 {
            log::info!(
                "vq step {}: recon {:.4} codebook {:.4} commit {:.4} acc {:.3}",
                stats.step,
                stats.recon,
                stats.codebook,
                stats.commit,
                stats.accuracy
            );
        }
        history.push(stats);
    }
    Ok((store, adam, state, history))
}

/// A trained VQ-VAE: config, parameters, optimizer state, and usage counters,
/// in the same hashed wrapper format as the main model checkpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VqCheckpoint {
    pub config: VqConfig,
    pub step: u64,
    pub params: ParamStore,
    pub adam: Option<AdamState>,
    pub state: VqTrainState,
}

impl From<WrapError> for VqError {
    fn from(e: WrapError) -> VqError {
        match e {
            WrapError::Io(e) => VqError::Io(e),
            WrapError::Json(e) => VqError::Json(e),
            WrapError::Format(msg) => VqError::Checkpoint(msg),
        }
    }
}

impl VqCheckpoint {
    /// Writes the checkpoint; returns the payload hash.
    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<String, VqError> {
        Ok(save_versioned(self, VQ_CHECKPOINT_VERSION, path.as_ref())?)
    }

    /// Reads and verifies a checkpoint; returns it with its payload hash.
    pub fn load(path: impl AsRef<std::path::Path>) -> Result<(VqCheckpoint, String), VqError> {
        let (ckpt, hash): (VqCheckpoint, String) =
            load_versioned(path.as_ref(), VQ_CHECKPOINT_VERSION)?;
        ckpt.config.validate().map_err(VqError::Checkpoint)?;
        Ok((ckpt, hash))
    }
}
