//! Pre-norm transformer blocks shared by the encoder, the decoder, and the
//! VQ feature encoder. Parameters are namespaced by a prefix such as
//! `"dec"`, so several stacks can live in one store.

use rand_chacha::ChaCha8Rng;

use crate::nn::{Graph, NodeId, ParamStore};

/// Uniform init half-width used across the models.
pub(crate) const INIT_SCALE: f64 = 0.02;

/// Registers one stack of `layers` pre-norm blocks plus the final norm.
pub(crate) fn init_stack(
    store: &mut ParamStore,
    prefix: &str,
    layers: usize,
    d_model: usize,
    d_ff: usize,
    rng: &mut ChaCha8Rng,
) {
    for l in 0..layers {
        let p = format!("{prefix}.l{l}");
        store.init_ones(&format!("{p}.ln1.g"), 1, d_model);
        store.init_zeros(&format!("{p}.ln1.b"), 1, d_model);
        for w in ["wq", "wk", "wv", "wo"] {
            store.init_uniform(&format!("{p}.{w}"), d_model, d_model, INIT_SCALE, rng);
        }
        store.init_ones(&format!("{p}.ln2.g"), 1, d_model);
        store.init_zeros(&format!("{p}.ln2.b"), 1, d_model);
        store.init_uniform(&format!("{p}.ff1"), d_model, d_ff, INIT_SCALE, rng);
        store.init_zeros(&format!("{p}.ff1b"), 1, d_ff);
        store.init_uniform(&format!("{p}.ff2"), d_ff, d_model, INIT_SCALE, rng);
        store.init_zeros(&format!("{p}.ff2b"), 1, d_model);
    }
    store.init_ones(&format!("{prefix}.lnf.g"), 1, d_model);
    store.init_zeros(&format!("{prefix}.lnf.b"), 1, d_model);
}

fn norm(g: &mut Graph, store: &ParamStore, name: &str, x: NodeId) -> NodeId {
    let gain = g.param(store, &format!("{name}.g"));
    let bias = g.param(store, &format!("{name}.b"));
    g.layer_norm(x, gain, bias)
}

/// One pre-norm block: `x + attn(ln1(x))`, then `x + ff(ln2(x))`.
pub(crate) fn block(
    g: &mut Graph,
    store: &ParamStore,
    prefix: &str,
    layer: usize,
    x: NodeId,
    heads: usize,
    causal: bool,
) -> NodeId {
    let p = format!("{prefix}.l{layer}");
    let normed = norm(g, store, &format!("{p}.ln1"), x);
    let (wq, wk, wv, wo) = (
        g.param(store, &format!("{p}.wq")),
        g.param(store, &format!("{p}.wk")),
        g.param(store, &format!("{p}.wv")),
        g.param(store, &format!("{p}.wo")),
    );
    let attn = g.attention(normed, wq, wk, wv, wo, heads, causal);
    let x = g.add(x, attn);

    let normed = norm(g, store, &format!("{p}.ln2"), x);
    let ff1 = g.param(store, &format!("{p}.ff1"));
    let ff1b = g.param(store, &format!("{p}.ff1b"));
    let h = g.matmul(normed, ff1);
    let h = g.add_row_broadcast(h, ff1b);
    let h = g.gelu(h);
    let ff2 = g.param(store, &format!("{p}.ff2"));
    let ff2b = g.param(store, &format!("{p}.ff2b"));
    let out = g.matmul(h, ff2);
    let out = g.add_row_broadcast(out, ff2b);
    g.add(x, out)
}

/// The stack's final layer norm.
pub(crate) fn final_norm(g: &mut Graph, store: &ParamStore, prefix: &str, x: NodeId) -> NodeId {
    norm(g, store, &format!("{prefix}.lnf"), x)
}
