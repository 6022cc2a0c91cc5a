//! Teacher-forced training.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::condition::{condition_rows_node, init_condition_params, SentenceCond, SongCond};
use super::config::ModelConfig;
use super::decoder::{decoder_logits_node, init_decoder};
use super::encoder::init_encoder;
use super::vocab::LyricVocab;
use super::ModelError;
use crate::attributes::QuantizerModel;
use crate::lyric::{syllable_controls, ToneTable};
use crate::nn::{adam_step, lr_schedule, AdamState, Graph, NodeId, ParamStore, ScheduleConfig};
use crate::remi::{encode_ids, token_syllable_map, tokenize_song};
use crate::score::SongRecord;

/// One song, fully preprocessed for the decoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainItem {
    pub id: String,
    /// The full token id stream, start token through end token.
    pub token_ids: Vec<usize>,
    /// Syllable ordinal for every token (the condition row to use).
    pub cond_map: Vec<usize>,
    pub cond: SongCond,
}

/// Preprocess one song: tokenize, map tokens to syllables, resolve tones,
/// POS tags, vocab ids, and attribute classes. `learned` supplies the
/// per-sentence melody features when the learned block is in use.
pub fn prepare_item(
    song: &SongRecord,
    cfg: &ModelConfig,
    vocab: &LyricVocab,
    quantizer: &QuantizerModel,
    table: &ToneTable,
    learned: Option<&[Vec<f64>]>,
) -> Result<TrainItem, ModelError> {
    let tokens = tokenize_song(song)?;
    if tokens.len() > cfg.max_tokens {
        return Err(ModelError::OverBudget { len: tokens.len(), budget: cfg.max_tokens });
    }
    let token_ids = encode_ids(&tokens);
    let cond_map = token_syllable_map(&tokens)?;

    if let Some(feats) = learned {
        if feats.len() != song.sentences.len() {
            return Err(ModelError::BadRequest(format!(
                "song {}: {} learned features for {} sentences",
                song.id,
                feats.len(),
                song.sentences.len()
            )));
        }
    }

    let mut sentences = Vec::with_capacity(song.sentences.len());
    for (i, sentence) in song.sentences.iter().enumerate() {
        let controls = syllable_controls(sentence, table)?;
        let attrs = crate::attributes::compute_attributes(sentence)?;
        let classes = quantizer.quantize(&attrs);
        sentences.push(SentenceCond {
            lyric_ids: vocab.ids(sentence.syllables.iter().map(|s| s.text.as_str())),
            tone_ids: controls.iter().map(|c| c.tone as usize).collect(),
            pos_ids: controls.iter().map(|c| c.pos as usize).collect(),
            structure: sentence.structure as usize,
            attr_classes: classes.0,
            learned: learned.map(|f| f[i].clone()),
        });
    }
    Ok(TrainItem {
        id: song.id.clone(),
        token_ids,
        cond_map,
        cond: SongCond { key: song.key as usize, emotion: song.emotion as usize, sentences },
    })
}

/// [`prepare_item`] over a corpus. `learned` maps song id to per-sentence
/// features; songs absent from the map train with a zero learned block.
pub fn prepare_items(
    corpus: &[SongRecord],
    cfg: &ModelConfig,
    vocab: &LyricVocab,
    quantizer: &QuantizerModel,
    table: &ToneTable,
    learned: Option<&std::collections::BTreeMap<String, Vec<Vec<f64>>>>,
) -> Result<Vec<TrainItem>, ModelError> {
    corpus
        .iter()
        .map(|song| {
            let feats = learned.and_then(|m| m.get(&song.id)).map(Vec::as_slice);
            prepare_item(song, cfg, vocab, quantizer, table, feats)
        })
        .collect()
}

/// Fresh parameters for every submodel, deterministically from `seed`.
pub fn init_params(cfg: &ModelConfig, vocab_size: usize, seed: u64) -> ParamStore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    init_encoder(&mut store, cfg, vocab_size, &mut rng);
    init_condition_params(&mut store, cfg, &mut rng);
    init_decoder(&mut store, cfg, &mut rng);
    store
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: u64,
    /// Songs per optimizer step (gradient accumulation, not padding).
    pub batch_size: usize,
    pub seed: u64,
    pub schedule: ScheduleConfig,
    /// Global-norm gradient clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
    pub log_every: u64,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            steps: 1000,
            batch_size: 4,
            seed: 0,
            schedule: ScheduleConfig::default(),
            clip_norm: Some(1.0),
            log_every: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainStats {
    pub step: u64,
    pub loss: f64,
    pub lr: f64,
    pub grad_norm: f64,
}

/// Builds one song's teacher-forced loss graph; returns the mean-NLL node.
fn item_loss_node(g: &mut Graph, store: &ParamStore, cfg: &ModelConfig, item: &TrainItem) -> NodeId {
    let n = item.token_ids.len();
    assert!(n >= 2, "song {} has a degenerate stream", item.id);
    let inputs = &item.token_ids[..n - 1];
    let targets = &item.token_ids[1..];
    let mask = vec![true; targets.len()];
    let rows = condition_rows_node(g, store, cfg, &item.cond);
    let cond = g.gather_rows(rows, &item.cond_map[..n - 1]);
    let logits = decoder_logits_node(g, store, cfg, inputs, Some(cond));
    g.cross_entropy_masked(logits, targets, &mask)
}

/// One song's mean token NLL under the current parameters. With `with_grads`
/// the loss gradient is accumulated into the store (on top of whatever is
/// already there), which is the shape finite-difference checking needs.
pub fn item_loss(store: &mut ParamStore, cfg: &ModelConfig, item: &TrainItem, with_grads: bool) -> f64 {
    let mut g = Graph::new();
    let loss = item_loss_node(&mut g, store, cfg, item);
    let value = g.value(loss).item();
    if with_grads {
        g.backward(loss, store);
    }
    value
}

/// One optimizer step over a batch of songs. Returns the mean token NLL.
pub fn train_step(
    store: &mut ParamStore,
    adam: &mut AdamState,
    cfg: &ModelConfig,
    batch: &[&TrainItem],
    lr: f64,
    clip_norm: Option<f64>,
) -> Result<f64, ModelError> {
    assert!(!batch.is_empty(), "train_step: empty batch");
    store.zero_grads();
    let mut total = 0.0;
    for item in batch {
        let mut g = Graph::new();
        let loss = item_loss_node(&mut g, store, cfg, item);
        total += g.value(loss).item();
        let scaled = g.scale(loss, 1.0 / batch.len() as f64);
        g.backward(scaled, store);
    }
    let mean = total / batch.len() as f64;
    if !mean.is_finite() {
        return Err(ModelError::NonFinite { step: adam.step_count() + 1 });
    }
    if let Some(clip) = clip_norm {
        let norm = store.grad_norm();
        if norm > clip {
            store.scale_grads(clip / norm);
        }
    }
    adam_step(store, adam, lr);
    Ok(mean)
}

/// The driver loop: samples batches, applies the schedule, reports stats
/// through `on_step` (every step; the caller decides what to log).
pub fn train(
    store: &mut ParamStore,
    adam: &mut AdamState,
    cfg: &ModelConfig,
    tcfg: &TrainConfig,
    items: &[TrainItem],
    mut on_step: impl FnMut(&TrainStats),
) -> Result<Vec<TrainStats>, ModelError> {
    assert!(!items.is_empty(), "train: no items");
    let mut rng = ChaCha8Rng::seed_from_u64(tcfg.seed);
    let mut history = Vec::with_capacity(tcfg.steps as usize);
    for _ in 0..tcfg.steps {
        let batch: Vec<&TrainItem> = (0..tcfg.batch_size.min(items.len()))
            .map(|_| &items[rng.gen_range(0..items.len())])
            .collect();
        let lr = lr_schedule(adam.step_count() + 1, &tcfg.schedule);
        let loss = train_step(store, adam, cfg, &batch, lr, tcfg.clip_norm)?;
        let stats = TrainStats { step: adam.step_count(), loss, lr, grad_norm: store.grad_norm() };
        on_step(&stats);
        history.push(stats);
    }
    Ok(history)
}
