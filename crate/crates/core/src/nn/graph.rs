//! Reverse-mode autodiff on a per-invocation tape.
//!
//! Building an op evaluates it eagerly; [`Graph::backward`] walks the tape in
//! reverse and accumulates parameter gradients into the [`ParamStore`].
//! Shape mismatches are programming errors and panic with both shapes.

use super::math::{gelu, gelu_grad, log_sum_exp, softmax_grad_row, softmax_in_place, LN_EPS};
use super::params::ParamStore;
use super::tensor::{matmul, matmul_nt, matmul_tn, Tensor};

/// Index of a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

struct AttnCache {
    q: Tensor,
    k: Tensor,
    v: Tensor,
    /// Post-softmax attention weights, one `[T,T]` matrix per head.
    probs: Vec<Tensor>,
    /// Per-head outputs concatenated, before the output projection.
    merged: Tensor,
}

enum Op {
    Leaf { trainable: Option<String> },
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    AddRowBroadcast(NodeId, NodeId),
    Matmul(NodeId, NodeId),
    GatherRows(NodeId, Vec<usize>),
    ConcatCols(Vec<NodeId>),
    ConcatRows(Vec<NodeId>),
    LayerNorm { x: NodeId, gain: NodeId, bias: NodeId, xhat: Tensor, inv_std: Vec<f64> },
    Gelu(NodeId),
    Softmax(NodeId),
    Attention {
        x: NodeId,
        wq: NodeId,
        wk: NodeId,
        wv: NodeId,
        wo: NodeId,
        heads: usize,
        cache: Box<AttnCache>,
    },
    CrossEntropy { logits: NodeId, targets: Vec<usize>, mask: Vec<bool>, probs: Tensor, count: f64 },
    SumSq(NodeId),
}

struct Node {
    value: Tensor,
    grad: Option<Tensor>,
    op: Op,
}

/// The tape. One graph per forward/backward invocation; drop it afterwards.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Graph {
        Graph { nodes: Vec::new() }
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        self.nodes.push(Node { value, grad: None, op });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Gradient w.r.t. a node, available after [`Graph::backward`].
    pub fn grad(&self, id: NodeId) -> Option<&Tensor> {
        self.nodes[id.0].grad.as_ref()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A constant leaf (no gradient is reported for it, but one is computed).
    pub fn input(&mut self, t: Tensor) -> NodeId {
        self.push(t, Op::Leaf { trainable: None })
    }

    /// A leaf bound to a named parameter; its value is snapshotted now and
    /// its gradient flows back into the store on [`Graph::backward`].
    pub fn param(&mut self, store: &ParamStore, name: &str) -> NodeId {
        self.push(store.get(name).clone(), Op::Leaf { trainable: Some(name.to_string()) })
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.shape(), vb.shape(), "add: shape mismatch {:?} vs {:?}", va.shape(), vb.shape());
        let mut out = va.clone();
        out.add_assign(vb);
        self.push(out, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.shape(), vb.shape(), "sub: shape mismatch {:?} vs {:?}", va.shape(), vb.shape());
        let mut out = va.clone();
        out.add_scaled(vb, -1.0);
        self.push(out, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.shape(), vb.shape(), "mul: shape mismatch {:?} vs {:?}", va.shape(), vb.shape());
        let mut out = va.clone();
        for (o, x) in out.data_mut().iter_mut().zip(vb.data()) {
            *o *= x;
        }
        self.push(out, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let mut out = self.value(a).clone();
        out.scale_in_place(c);
        self.push(out, Op::Scale(a, c))
    }

    /// `[M,N] + [1,N]` (bias addition).
    pub fn add_row_broadcast(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(
            (1, va.cols()),
            vb.shape(),
            "add_row_broadcast: bias shape {:?} does not broadcast over {:?}",
            vb.shape(),
            va.shape()
        );
        let mut out = va.clone();
        for r in 0..out.rows() {
            for (o, x) in out.row_mut(r).iter_mut().zip(vb.row(0)) {
                *o += x;
            }
        }
        self.push(out, Op::AddRowBroadcast(a, b))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let out = matmul(self.value(a), self.value(b));
        self.push(out, Op::Matmul(a, b))
    }

    /// Row gather: `out[r] = a[indices[r]]`. Used for embedding lookup and
    /// replication of per-sentence rows to syllables or tokens.
    pub fn gather_rows(&mut self, a: NodeId, indices: &[usize]) -> NodeId {
        let va = self.value(a);
        let mut out = Tensor::zeros(indices.len(), va.cols());
        for (r, &i) in indices.iter().enumerate() {
            assert!(i < va.rows(), "gather_rows: index {i} out of {} rows", va.rows());
            out.row_mut(r).copy_from_slice(va.row(i));
        }
        self.push(out, Op::GatherRows(a, indices.to_vec()))
    }

    /// Embedding lookup is a row gather on a parameter table.
    pub fn embedding_lookup(&mut self, table: NodeId, ids: &[usize]) -> NodeId {
        self.gather_rows(table, ids)
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty(), "concat_cols: no parts");
        let rows = self.value(parts[0]).rows();
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut out = Tensor::zeros(rows, cols);
        let mut offset = 0;
        for &p in parts {
            let v = self.value(p);
            assert_eq!(v.rows(), rows, "concat_cols: row mismatch {} vs {rows}", v.rows());
            for r in 0..rows {
                out.row_mut(r)[offset..offset + v.cols()].copy_from_slice(v.row(r));
            }
            offset += v.cols();
        }
        self.push(out, Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty(), "concat_rows: no parts");
        let cols = self.value(parts[0]).cols();
        let rows: usize = parts.iter().map(|&p| self.value(p).rows()).sum();
        let mut out = Tensor::zeros(rows, cols);
        let mut offset = 0;
        for &p in parts {
            let v = self.value(p);
            assert_eq!(v.cols(), cols, "concat_rows: col mismatch {} vs {cols}", v.cols());
            for r in 0..v.rows() {
                out.row_mut(offset + r).copy_from_slice(v.row(r));
            }
            offset += v.rows();
        }
        self.push(out, Op::ConcatRows(parts.to_vec()))
    }

    /// Row-wise layer norm with learned gain/bias (each `[1,N]`).
    pub fn layer_norm(&mut self, x: NodeId, gain: NodeId, bias: NodeId) -> NodeId {
        let vx = self.value(x);
        let (rows, cols) = vx.shape();
        assert_eq!(self.value(gain).shape(), (1, cols), "layer_norm: gain shape");
        assert_eq!(self.value(bias).shape(), (1, cols), "layer_norm: bias shape");
        let mut xhat = Tensor::zeros(rows, cols);
        let mut inv_std = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = vx.row(r);
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let inv = 1.0 / (var + LN_EPS).sqrt();
            inv_std.push(inv);
            for (o, v) in xhat.row_mut(r).iter_mut().zip(row) {
                *o = (v - mean) * inv;
            }
        }
        let (vg, vb) = (self.value(gain), self.value(bias));
        let mut out = Tensor::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                out.set(r, c, xhat.at(r, c) * vg.at(0, c) + vb.at(0, c));
            }
        }
        self.push(out, Op::LayerNorm { x, gain, bias, xhat, inv_std })
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, x: NodeId) -> NodeId {
        let mut out = self.value(x).clone();
        for v in out.data_mut() {
            *v = gelu(*v);
        }
        self.push(out, Op::Gelu(x))
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, x: NodeId) -> NodeId {
        let vx = self.value(x);
        let mut out = vx.clone();
        for r in 0..out.rows() {
            softmax_in_place(out.row_mut(r));
        }
        self.push(out, Op::Softmax(x))
    }

    /// Fused multi-head self-attention. With `causal` the output at step t
    /// attends only to steps ≤ t. Projections have no bias terms.
    pub fn attention(
        &mut self,
        x: NodeId,
        wq: NodeId,
        wk: NodeId,
        wv: NodeId,
        wo: NodeId,
        heads: usize,
        causal: bool,
    ) -> NodeId {
        let vx = self.value(x);
        let (t_len, d) = vx.shape();
        for (w, label) in [(wq, "Wq"), (wk, "Wk"), (wv, "Wv"), (wo, "Wo")] {
            assert_eq!(
                self.value(w).shape(),
                (d, d),
                "attention: {label} shape {:?} vs model dim {d}",
                self.value(w).shape()
            );
        }
        assert!(d % heads == 0, "attention: hidden size {d} not divisible by {heads} heads");
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();

        let q = matmul(vx, self.value(wq));
        let k = matmul(vx, self.value(wk));
        let v = matmul(vx, self.value(wv));

        let mut merged = Tensor::zeros(t_len, d);
        let mut probs = Vec::with_capacity(heads);
        for h in 0..heads {
            let qh = col_block(&q, h * dh, dh);
            let kh = col_block(&k, h * dh, dh);
            let vh = col_block(&v, h * dh, dh);
            let mut scores = matmul_nt(&qh, &kh);
            scores.scale_in_place(scale);
            if causal {
                for i in 0..t_len {
                    for j in (i + 1)..t_len {
                        scores.set(i, j, f64::NEG_INFINITY);
                    }
                }
            }
            for r in 0..t_len {
                softmax_in_place(scores.row_mut(r));
            }
            let oh = matmul(&scores, &vh);
            copy_col_block(&mut merged, &oh, h * dh);
            probs.push(scores);
        }
        let out = matmul(&merged, self.value(wo));
        let cache = Box::new(AttnCache { q, k, v, probs, merged });
        self.push(out, Op::Attention { x, wq, wk, wv, wo, heads, cache })
    }

    /// Mean negative log-likelihood of `targets` under row-wise softmax of
    /// `logits`, counting only rows where `mask` is true. Returns a scalar.
    pub fn cross_entropy_masked(&mut self, logits: NodeId, targets: &[usize], mask: &[bool]) -> NodeId {
        let vl = self.value(logits);
        assert_eq!(vl.rows(), targets.len(), "cross_entropy: {} rows vs {} targets", vl.rows(), targets.len());
        assert_eq!(targets.len(), mask.len(), "cross_entropy: mask length");
        let count = mask.iter().filter(|m| **m).count() as f64;
        assert!(count > 0.0, "cross_entropy: all rows masked out");
        let mut probs = vl.clone();
        let mut total = 0.0;
        for r in 0..probs.rows() {
            let target = targets[r];
            assert!(target < vl.cols(), "cross_entropy: target {target} out of {} classes", vl.cols());
            let row = probs.row_mut(r);
            let lse = log_sum_exp(row);
            let nll = lse - row[target];
            for v in row.iter_mut() {
                *v = (*v - lse).exp();
            }
            if mask[r] {
                total += nll;
            }
        }
        let value = Tensor::scalar(total / count);
        self.push(
            value,
            Op::CrossEntropy { logits, targets: targets.to_vec(), mask: mask.to_vec(), probs, count },
        )
    }

    /// Sum of squared entries, as a scalar node (`‖x‖²`).
    pub fn sum_sq(&mut self, x: NodeId) -> NodeId {
        let total = self.value(x).data().iter().map(|v| v * v).sum();
        self.push(Tensor::scalar(total), Op::SumSq(x))
    }

    /// Reverse pass from a scalar loss; parameter gradients are accumulated
    /// into `store`, node gradients stay inspectable via [`Graph::grad`].
    pub fn backward(&mut self, loss: NodeId, store: &mut ParamStore) {
        assert_eq!(self.value(loss).shape(), (1, 1), "backward: loss must be scalar");
        let mut grads: Vec<Option<Tensor>> = Vec::with_capacity(self.nodes.len());
        grads.resize_with(self.nodes.len(), || None);
        grads[loss.0] = Some(Tensor::scalar(1.0));
        for i in (0..self.nodes.len()).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.backward_node(i, &g, &mut grads);
            if let Op::Leaf { trainable: Some(name) } = &self.nodes[i].op {
                store.accumulate_grad(name, &g);
            }
            self.nodes[i].grad = Some(g);
        }
    }

    fn backward_node(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf { .. } => {}
            Op::Add(a, b) => {
                acc(grads, *a, g.clone());
                acc(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(grads, *a, g.clone());
                let mut gb = g.clone();
                gb.scale_in_place(-1.0);
                acc(grads, *b, gb);
            }
            Op::Mul(a, b) => {
                let mut ga = g.clone();
                for (x, y) in ga.data_mut().iter_mut().zip(self.value(*b).data()) {
                    *x *= y;
                }
                let mut gb = g.clone();
                for (x, y) in gb.data_mut().iter_mut().zip(self.value(*a).data()) {
                    *x *= y;
                }
                acc(grads, *a, ga);
                acc(grads, *b, gb);
            }
            Op::Scale(a, c) => {
                let mut ga = g.clone();
                ga.scale_in_place(*c);
                acc(grads, *a, ga);
            }
            Op::AddRowBroadcast(a, b) => {
                acc(grads, *a, g.clone());
                let mut gb = Tensor::zeros(1, g.cols());
                for r in 0..g.rows() {
                    for (o, x) in gb.row_mut(0).iter_mut().zip(g.row(r)) {
                        *o += x;
                    }
                }
                acc(grads, *b, gb);
            }
            Op::Matmul(a, b) => {
                acc(grads, *a, matmul_nt(g, self.value(*b)));
                acc(grads, *b, matmul_tn(self.value(*a), g));
            }
            Op::GatherRows(a, indices) => {
                let va = self.value(*a);
                let mut ga = Tensor::zeros(va.rows(), va.cols());
                for (r, &idx) in indices.iter().enumerate() {
                    for (o, x) in ga.row_mut(idx).iter_mut().zip(g.row(r)) {
                        *o += x;
                    }
                }
                acc(grads, *a, ga);
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let cols = self.value(p).cols();
                    let mut gp = Tensor::zeros(g.rows(), cols);
                    for r in 0..g.rows() {
                        gp.row_mut(r).copy_from_slice(&g.row(r)[offset..offset + cols]);
                    }
                    acc(grads, p, gp);
                    offset += cols;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let rows = self.value(p).rows();
                    let mut gp = Tensor::zeros(rows, g.cols());
                    for r in 0..rows {
                        gp.row_mut(r).copy_from_slice(g.row(offset + r));
                    }
                    acc(grads, p, gp);
                    offset += rows;
                }
            }
            Op::LayerNorm { x, gain, bias, xhat, inv_std } => {
                let vg = self.value(*gain);
                let (rows, cols) = g.shape();
                let mut gx = Tensor::zeros(rows, cols);
                let mut ggain = Tensor::zeros(1, cols);
                let mut gbias = Tensor::zeros(1, cols);
                for r in 0..rows {
                    let gr = g.row(r);
                    let xr = xhat.row(r);
                    // dxhat = g ⊙ gain; dx = inv·(dxhat − mean(dxhat) − xhat·mean(dxhat⊙xhat))
                    let mut m1 = 0.0;
                    let mut m2 = 0.0;
                    for c in 0..cols {
                        let dxh = gr[c] * vg.at(0, c);
                        m1 += dxh;
                        m2 += dxh * xr[c];
                    }
                    m1 /= cols as f64;
                    m2 /= cols as f64;
                    for c in 0..cols {
                        let dxh = gr[c] * vg.at(0, c);
                        gx.set(r, c, inv_std[r] * (dxh - m1 - xr[c] * m2));
                        ggain.row_mut(0)[c] += gr[c] * xr[c];
                        gbias.row_mut(0)[c] += gr[c];
                    }
                }
                acc(grads, *x, gx);
                acc(grads, *gain, ggain);
                acc(grads, *bias, gbias);
            }
            Op::Gelu(a) => {
                let mut ga = g.clone();
                for (gv, &xv) in ga.data_mut().iter_mut().zip(self.value(*a).data()) {
                    *gv *= gelu_grad(xv);
                }
                acc(grads, *a, ga);
            }
            Op::Softmax(a) => {
                let p = &node.value;
                let mut ga = Tensor::zeros(p.rows(), p.cols());
                for r in 0..p.rows() {
                    softmax_grad_row(p.row(r), g.row(r), ga.row_mut(r));
                }
                acc(grads, *a, ga);
            }
            Op::Attention { x, wq, wk, wv, wo, heads, cache } => {
                let vx = self.value(*x);
                let (t_len, d) = vx.shape();
                let dh = d / heads;
                let scale = 1.0 / (dh as f64).sqrt();

                acc(grads, *wo, matmul_tn(&cache.merged, g));
                let d_merged = matmul_nt(g, self.value(*wo));

                let mut dq = Tensor::zeros(t_len, d);
                let mut dk = Tensor::zeros(t_len, d);
                let mut dv = Tensor::zeros(t_len, d);
                for h in 0..*heads {
                    let p = &cache.probs[h];
                    let kh = col_block(&cache.k, h * dh, dh);
                    let qh = col_block(&cache.q, h * dh, dh);
                    let vh = col_block(&cache.v, h * dh, dh);
                    let d_oh = col_block(&d_merged, h * dh, dh);

                    let dp = matmul_nt(&d_oh, &vh);
                    let d_vh = matmul_tn(p, &d_oh);
                    let mut ds = Tensor::zeros(t_len, t_len);
                    for r in 0..t_len {
                        softmax_grad_row(p.row(r), dp.row(r), ds.row_mut(r));
                    }
                    ds.scale_in_place(scale);
                    let d_qh = matmul(&ds, &kh);
                    let d_kh = matmul_tn(&ds, &qh);
                    copy_col_block(&mut dq, &d_qh, h * dh);
                    copy_col_block(&mut dk, &d_kh, h * dh);
                    copy_col_block(&mut dv, &d_vh, h * dh);
                }

                let mut gx = matmul_nt(&dq, self.value(*wq));
                gx.add_assign(&matmul_nt(&dk, self.value(*wk)));
                gx.add_assign(&matmul_nt(&dv, self.value(*wv)));
                acc(grads, *x, gx);
                acc(grads, *wq, matmul_tn(vx, &dq));
                acc(grads, *wk, matmul_tn(vx, &dk));
                acc(grads, *wv, matmul_tn(vx, &dv));
            }
            Op::CrossEntropy { logits, targets, mask, probs, count } => {
                let gs = g.item();
                let mut gl = probs.clone();
                for r in 0..gl.rows() {
                    if mask[r] {
                        let w = gs / count;
                        let row = gl.row_mut(r);
                        for v in row.iter_mut() {
                            *v *= w;
                        }
                        row[targets[r]] -= w;
                    } else {
                        for v in gl.row_mut(r).iter_mut() {
                            *v = 0.0;
                        }
                    }
                }
                acc(grads, *logits, gl);
            }
            Op::SumSq(a) => {
                let mut ga = self.value(*a).clone();
                ga.scale_in_place(2.0 * g.item());
                acc(grads, *a, ga);
            }
        }
    }
}

fn acc(grads: &mut [Option<Tensor>], id: NodeId, delta: Tensor) {
    match &mut grads[id.0] {
        Some(g) => g.add_assign(&delta),
        slot @ None => *slot = Some(delta),
    }
}






fn col_block(t: &Tensor, start: usize, width: usize) -> Tensor {
    let mut out = Tensor::zeros(t.rows(), width);
    for r in 0..t.rows() {
        out.row_mut(r).copy_from_slice(&t.row(r)[start..start + width]);
    }
    out
}

fn copy_col_block(dst: &mut Tensor, src: &Tensor, start: usize) {
    for r in 0..src.rows() {
        dst.row_mut(r)[start..start + src.cols()].copy_from_slice(src.row(r));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        let mut g = Graph::new();
        let x = g.input(Tensor::from_vec(1, 2, vec![0.0, 0.0]));
        let y = g.softmax(x);
        assert_eq!(g.value(y).data(), &[0.5, 0.5]);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut g = Graph::new();
        let x = g.input(Tensor::from_vec(3, 4, (0..12).map(|i| i as f64 * 0.7 - 3.0).collect()));
        let y = g.softmax(x);
        for r in 0..3 {
            let sum: f64 = g.value(y).row(r).iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn cross_entropy_of_confident_correct_prediction_approaches_zero() {
        let mut g = Graph::new();
        let x = g.input(Tensor::from_vec(1, 3, vec![100.0, 0.0, 0.0]));
        let loss = g.cross_entropy_masked(x, &[0], &[true]);
        assert!(g.value(loss).item() < 1e-12);
    }

    #[test]
    fn cross_entropy_respects_the_padding_mask() {
        let mut g = Graph::new();
        // Row 1 is wildly wrong but masked out.
        let x = g.input(Tensor::from_vec(2, 3, vec![100.0, 0.0, 0.0, 100.0, 0.0, 0.0]));
        let loss = g.cross_entropy_masked(x, &[0, 1], &[true, false]);
        assert!(g.value(loss).item() < 1e-12);
    }

    fn random_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
        use rand::Rng;
        Tensor::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    #[test]
    fn causal_attention_ignores_future_positions() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut store = ParamStore::new();
        store.init_uniform("wq", 8, 8, 0.4, &mut rng);
        store.init_uniform("wk", 8, 8, 0.4, &mut rng);
        store.init_uniform("wv", 8, 8, 0.4, &mut rng);
        store.init_uniform("wo", 8, 8, 0.4, &mut rng);
        let x = random_tensor(&mut rng, 7, 8);

        let run = |input: &Tensor| {
            let mut g = Graph::new();
            let xi = g.input(input.clone());
            let (wq, wk, wv, wo) = (
                g.param(&store, "wq"),
                g.param(&store, "wk"),
                g.param(&store, "wv"),
                g.param(&store, "wo"),
            );
            let y = g.attention(xi, wq, wk, wv, wo, 2, true);
            g.value(y).clone()
        };

        let base = run(&x);
        for t in 0..7 {
            let mut perturbed = x.clone();
            for c in 0..8 {
                perturbed.set(t, c, perturbed.at(t, c) + 0.5);
            }
            let out = run(&perturbed);
            for earlier in 0..t {
                assert_eq!(base.row(earlier), out.row(earlier), "step {earlier} changed by perturbing {t}");
            }
        }
    }

    #[test]
    fn bidirectional_attention_sees_future_positions() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut store = ParamStore::new();
        for n in ["wq", "wk", "wv", "wo"] {
            store.init_uniform(n, 8, 8, 0.4, &mut rng);
        }
        let x = random_tensor(&mut rng, 5, 8);
        let run = |input: &Tensor| {
            let mut g = Graph::new();
            let xi = g.input(input.clone());
            let (wq, wk, wv, wo) = (
                g.param(&store, "wq"),
                g.param(&store, "wk"),
                g.param(&store, "wv"),
                g.param(&store, "wo"),
            );
            let y = g.attention(xi, wq, wk, wv, wo, 2, false);
            g.value(y).clone()
        };
        let base = run(&x);
        let mut perturbed = x.clone();
        perturbed.set(4, 0, perturbed.at(4, 0) + 1.0);
        let out = run(&perturbed);
        assert_ne!(base.row(0), out.row(0), "bidirectional attention must propagate backwards");
    }

    #[test]
    fn gather_rows_backward_scatters() {
        let mut store = ParamStore::new();
        store.insert("table", Tensor::from_vec(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let mut g = Graph::new();
        let table = g.param(&store, "table");
        let picked = g.gather_rows(table, &[2, 0, 2]);
        let loss = g.sum_sq(picked);
        g.backward(loss, &mut store);
        // d/drow = 2·row per occurrence; row 2 occurs twice, row 1 never.
        let grad = store.grad("table").unwrap();
        assert_eq!(grad.row(0), &[2.0, 4.0]);
        assert_eq!(grad.row(1), &[0.0, 0.0]);
        assert_eq!(grad.row(2), &[20.0, 24.0]);
    }

    #[test]
    #[should_panic(expected = "add: shape mismatch")]
    fn add_rejects_mismatched_shapes() {
        let mut g = Graph::new();
        let a = g.input(Tensor::zeros(2, 3));
        let b = g.input(Tensor::zeros(3, 2));
        g.add(a, b);
    }

    #[test]
    fn backward_through_matmul_matches_hand_derivative() {
        // loss = sum_sq(a·b): d/da = 2(a·b)·bᵀ, d/db = aᵀ·2(a·b)
        let mut store = ParamStore::new();
        store.insert("a", Tensor::from_vec(1, 2, vec![1.0, 2.0]));
        store.insert("b", Tensor::from_vec(2, 1, vec![3.0, 4.0]));
        let mut g = Graph::new();
        let a = g.param(&store, "a");
        let b = g.param(&store, "b");
        let c = g.matmul(a, b); // [[11]]
        let loss = g.sum_sq(c); // 121
        assert_eq!(g.value(loss).item(), 121.0);
        g.backward(loss, &mut store);
        assert_eq!(store.grad("a").unwrap().data(), &[66.0, 88.0]); // 2·11·[3,4]
        assert_eq!(store.grad("b").unwrap().data(), &[22.0, 44.0]); // [1,2]ᵀ·22
    }
}
