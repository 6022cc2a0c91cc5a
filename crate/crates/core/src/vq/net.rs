//! VQ-VAE networks: a bidirectional melody encoder (`vqe.*`), the shared
//! grouped codebook (`vq.codebook`), and a small in-attention reconstruction
//! decoder (`vqd.*`) that reads the quantized latent before every layer.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::VqConfig;
use crate::model::layers::{self, INIT_SCALE};
use crate::nn::{sinusoidal_positions, Graph, NodeId, ParamStore};
use crate::remi::VOCAB_SIZE;

/// Creates all encoder, codebook, and decoder parameters for `cfg`.
pub fn init_vq_params(cfg: &VqConfig, seed: u64) -> ParamStore {
    cfg.validate().expect("invalid VqConfig");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();

    store.init_uniform("vqe.embed", VOCAB_SIZE, cfg.d_model, INIT_SCALE, &mut rng);
    layers::init_stack(&mut store, "vqe", cfg.layers, cfg.d_model, cfg.d_ff, &mut rng);
    store.init_uniform("vqe.w_z", cfg.d_model, cfg.d_latent, INIT_SCALE, &mut rng);

    store.init_uniform("vq.codebook", cfg.codebook_size, cfg.group_width(), INIT_SCALE, &mut rng);

    store.init_uniform("vqd.embed", VOCAB_SIZE, cfg.d_model, INIT_SCALE, &mut rng);
    store.init_uniform("vqd.w_in", cfg.d_latent, cfg.d_model, INIT_SCALE, &mut rng);
    layers::init_stack(&mut store, "vqd", cfg.layers, cfg.d_model, cfg.d_ff, &mut rng);
    store.init_uniform("vqd.w_out", cfg.d_model, VOCAB_SIZE, INIT_SCALE, &mut rng);
    store.init_zeros("vqd.b_out", 1, VOCAB_SIZE);
    store
}

/// Encodes one sentence's token stream to a `[1, d_latent]` latent:
/// bidirectional attention over the tokens, read off the leading `SEQ` slot,
/// projected down.
pub fn encode_sentence_latent(
    g: &mut Graph,
    store: &ParamStore,
    cfg: &VqConfig,
    token_ids: &[usize],
) -> NodeId {
    assert!(!token_ids.is_empty(), "cannot encode an empty token stream");
    assert!(
        token_ids.len() <= cfg.max_tokens,
        "sentence stream of {} tokens exceeds budget {}",
        token_ids.len(),
        cfg.max_tokens
    );
    let embed = g.param(store, "vqe.embed");
    let tok = g.gather_rows(embed, token_ids);
    let pos = g.input(sinusoidal_positions(token_ids.len(), cfg.d_model));
    let mut x = g.add(tok, pos);
    for l in 0..cfg.layers {
        x = layers::block(g, store, "vqe", l, x, cfg.heads, false);
    }
    let x = layers::final_norm(g, store, "vqe", x);
    let summary = g.gather_rows(x, &[0]);
    let w_z = g.param(store, "vqe.w_z");
    g.matmul(summary, w_z)
}

/// Causal reconstruction logits for `token_ids` given the `[1, d_latent]`
/// quantized latent, injected before every decoder layer.
pub(crate) fn recon_logits_node(
    g: &mut Graph,
    store: &ParamStore,
    cfg: &VqConfig,
    token_ids: &[usize],
    latent: NodeId,
) -> NodeId {
    assert!(!token_ids.is_empty(), "cannot decode an empty token stream");
    let embed = g.param(store, "vqd.embed");
    let tok = g.gather_rows(embed, token_ids);
    let pos = g.input(sinusoidal_positions(token_ids.len(), cfg.d_model));
    let mut x = g.add(tok, pos);

    let w_in = g.param(store, "vqd.w_in");
    let e = g.matmul(latent, w_in);
    let e_rows = g.gather_rows(e, &vec![0; token_ids.len()]);

    for l in 0..cfg.layers {
        x = g.add(x, e_rows);
        x = layers::block(g, store, "vqd", l, x, cfg.heads, true);
    }
    let x = layers::final_norm(g, store, "vqd", x);
    let w_out = g.param(store, "vqd.w_out");
    let b_out = g.param(store, "vqd.b_out");
    let out = g.matmul(x, w_out);
    g.add_row_broadcast(out, b_out)
}
