//! Causal decoder over the event-token stream with in-attention
//! conditioning: the projected condition is added to the hidden state
//! before every layer, so control signals reach all depths directly.

use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use super::layers::{self, INIT_SCALE};
use crate::nn::{sinusoidal_positions, Graph, NodeId, ParamStore, Tensor};
use crate::remi::VOCAB_SIZE;

pub(crate) fn init_decoder(store: &mut ParamStore, cfg: &ModelConfig, rng: &mut ChaCha8Rng) {
    store.init_uniform("dec.embed", VOCAB_SIZE, cfg.d_model, INIT_SCALE, rng);
    store.init_uniform("dec.w_in", cfg.d_cond(), cfg.d_model, INIT_SCALE, rng);
    layers::init_stack(store, "dec", cfg.layers, cfg.d_model, cfg.d_ff, rng);
    store.init_uniform("dec.w_out", cfg.d_model, VOCAB_SIZE, INIT_SCALE, rng);
    store.init_zeros("dec.b_out", 1, VOCAB_SIZE);
}

/// Full teacher-forced decoder pass. `cond` is the per-token condition
/// matrix `[T, d_cond]` (already gathered from syllable rows); `None` runs
/// the decoder unconditionally. Returns `[T, VOCAB_SIZE]` logits.
pub(crate) fn decoder_logits_node(
    g: &mut Graph,
    store: &ParamStore,
    cfg: &ModelConfig,
    token_ids: &[usize],
    cond: Option<NodeId>,
) -> NodeId {
    assert!(!token_ids.is_empty(), "decoder: empty token stream");
    assert!(
        token_ids.len() <= cfg.max_tokens,
        "decoder: {} tokens over budget {}",
        token_ids.len(),
        cfg.max_tokens
    );
    let embed = g.param(store, "dec.embed");
    let tok = g.gather_rows(embed, token_ids);
    let pos = g.input(sinusoidal_positions(token_ids.len(), cfg.d_model));
    let mut x = g.add(tok, pos);

    let injected = cond.map(|c| {
        assert_eq!(
            g.value(c).shape(),
            (token_ids.len(), cfg.d_cond()),
            "decoder: condition shape {:?} for {} tokens",
            g.value(c).shape(),
            token_ids.len()
        );
        let w_in = g.param(store, "dec.w_in");
        g.matmul(c, w_in)
    });

    for l in 0..cfg.layers {
        if let Some(e) = injected {
            x = g.add(x, e);
        }
        x = layers::block(g, store, "dec", l, x, cfg.heads, true);
    }
    let x = layers::final_norm(g, store, "dec", x);
    let w_out = g.param(store, "dec.w_out");
    let b_out = g.param(store, "dec.b_out");
    let logits = g.matmul(x, w_out);
    g.add_row_broadcast(logits, b_out)
}

/// Convenience non-training forward pass; builds a throwaway graph.
pub fn forward_logits(store: &ParamStore, cfg: &ModelConfig, token_ids: &[usize], cond: Option<&Tensor>) -> Tensor {
    let mut g = Graph::new();
    let cond_node = cond.map(|c| g.input(c.clone()));
    let logits = decoder_logits_node(&mut g, store, cfg, token_ids, cond_node);
    g.value(logits).clone()
}
