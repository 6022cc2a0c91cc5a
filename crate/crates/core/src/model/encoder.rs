//! Bidirectional sentence encoder producing one semantic embedding per
//! lyric sentence.

use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use super::layers::{self, INIT_SCALE};
use super::vocab::LYRIC_SEQ;
use crate::nn::{sinusoidal_positions, Graph, NodeId, ParamStore};

pub(crate) fn init_encoder(store: &mut ParamStore, cfg: &ModelConfig, vocab_size: usize, rng: &mut ChaCha8Rng) {
    store.init_uniform("enc.embed", vocab_size, cfg.d_model, INIT_SCALE, rng);
    layers::init_stack(store, "enc", cfg.layers, cfg.d_model, cfg.d_ff, rng);
    store.init_uniform("enc.w_sem", cfg.d_model, cfg.d_lyric, INIT_SCALE, rng);
}

/// Encodes one sentence (vocab ids, without the start slot) to a `[1, d_lyric]`
/// semantic embedding: bidirectional attention over the syllables, read off
/// the prepended start slot, projected down.
pub(crate) fn encode_sentence_node(
    g: &mut Graph,
    store: &ParamStore,
    cfg: &ModelConfig,
    syllable_ids: &[usize],
) -> NodeId {
    let mut ids = Vec::with_capacity(syllable_ids.len() + 1);
    ids.push(LYRIC_SEQ);
    ids.extend_from_slice(syllable_ids);
    assert!(
        ids.len() <= cfg.max_lyric,
        "sentence of {} syllables exceeds encoder budget {}",
        syllable_ids.len(),
        cfg.max_lyric
    );
    let embed = g.param(store, "enc.embed");
    let tok = g.gather_rows(embed, &ids);
    let pos = g.input(sinusoidal_positions(ids.len(), cfg.d_model));
    let mut x = g.add(tok, pos);
    for l in 0..cfg.layers {
        x = layers::block(g, store, "enc", l, x, cfg.heads, false);
    }
    let x = layers::final_norm(g, store, "enc", x);
    let summary = g.gather_rows(x, &[0]);
    let w_sem = g.param(store, "enc.w_sem");
    g.matmul(summary, w_sem)
}
