//! Adam optimizer with bias correction.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use super::tensor::Tensor;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState {
    m: BTreeMap<String, Tensor>,
    v: BTreeMap<String, Tensor>,
    step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamState {
    fn default() -> AdamState {
        AdamState::new()
    }
}

impl AdamState {
    pub fn new() -> AdamState {
        AdamState { m: BTreeMap::new(), v: BTreeMap::new(), step: 0, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    /// Number of steps applied so far.
    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Zeroes the moment buffers of the given rows of `name`, so a parameter
    /// row that was overwritten out-of-band (e.g. a reseeded codebook entry)
    /// does not inherit stale momentum. No-op if the buffers don't exist yet.
    pub fn reset_rows(&mut self, name: &str, rows: &[usize]) {
        for buf in [self.m.get_mut(name), self.v.get_mut(name)].into_iter().flatten() {
            for &r in rows {
                for x in buf.row_mut(r) {
                    *x = 0.0;
                }
            }
        }
    }
}

/// Apply one Adam update to every parameter that has a gradient in `store`.
/// Parameters without a gradient this step are left untouched (their moment
/// buffers also stay frozen). Gradients are not cleared; call
/// [`ParamStore::zero_grads`] before the next backward pass.
pub fn adam_step(store: &mut ParamStore, state: &mut AdamState, lr: f64) {
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    let names: Vec<String> = store.names().into_iter().map(str::to_string).collect();
    for name in names {
        let Some(grad) = store.grad(&name).cloned() else { continue };
        let (rows, cols) = grad.shape();
        let m = state.m.entry(name.clone()).or_insert_with(|| Tensor::zeros(rows, cols));
        let v = state.v.entry(name.clone()).or_insert_with(|| Tensor::zeros(rows, cols));
        assert_eq!(m.shape(), grad.shape(), "adam: moment shape drift for {name}");
        let param = store.get_mut(&name);
        for i in 0..grad.len() {
            let g = grad.data()[i];
            let mi = state.beta1 * m.data()[i] + (1.0 - state.beta1) * g;
            let vi = state.beta2 * v.data()[i] + (1.0 - state.beta2) * g * g;
            m.data_mut()[i] = mi;
            v.data_mut()[i] = vi;
            let m_hat = mi / bc1;
            let v_hat = vi / bc2;
            param.data_mut()[i] -= lr * m_hat / (v_hat.sqrt() + state.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_gradient_means_no_update() {
        let mut store = ParamStore::new();
        store.insert("w", Tensor::from_vec(1, 2, vec![1.5, -2.5]));
        let mut state = AdamState::new();
        adam_step(&mut store, &mut state, 0.1);
        assert_eq!(store.get("w").data(), &[1.5, -2.5]);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn first_step_matches_the_closed_form() {
        // Bias correction makes m̂ = g and v̂ = g² at step 1, so the update is
        // exactly lr·g/(|g| + eps).
        let mut store = ParamStore::new();
        store.insert("w", Tensor::from_vec(1, 1, vec![0.7]));
        store.accumulate_grad("w", &Tensor::from_vec(1, 1, vec![4.0]));
        let mut state = AdamState::new();
        adam_step(&mut store, &mut state, 0.01);
        let expected = 0.7 - 0.01 * 4.0 / (4.0 + 1e-8);
        assert!((store.get("w").item() - expected).abs() < 1e-15, "got {}", store.get("w").item());
    }

    #[test]
    fn descends_a_quadratic_bowl() {
        // minimize (w − 3)² from w = 0
        let mut store = ParamStore::new();
        store.insert("w", Tensor::from_vec(1, 1, vec![0.0]));
        let mut state = AdamState::new();
        for _ in 0..2_000 {
            store.zero_grads();
            let w = store.get("w").item();
            store.accumulate_grad("w", &Tensor::from_vec(1, 1, vec![2.0 * (w - 3.0)]));
            adam_step(&mut store, &mut state, 0.05);
        }
        let w = store.get("w").item();
        assert!((w - 3.0).abs() < 1e-2, "ended at {w}");
    }

    #[test]
    fn reset_rows_clears_only_the_named_rows() {
        let mut store = ParamStore::new();
        store.insert("w", Tensor::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]));
        store.accumulate_grad("w", &Tensor::from_vec(2, 2, vec![0.5, 0.5, 0.5, 0.5]));
        let mut state = AdamState::new();
        adam_step(&mut store, &mut state, 0.01);
        state.reset_rows("w", &[1]);
        assert_ne!(state.m["w"].row(0), [0.0, 0.0]);
        assert_eq!(state.m["w"].row(1), [0.0, 0.0]);
        assert_eq!(state.v["w"].row(1), [0.0, 0.0]);
        state.reset_rows("absent", &[0]); // must not panic
    }

    #[test]
    fn state_survives_serde_round_trip() {
        let mut store = ParamStore::new();
        store.insert("w", Tensor::from_vec(1, 1, vec![1.0]));
        store.accumulate_grad("w", &Tensor::from_vec(1, 1, vec![0.5]));
        let mut state = AdamState::new();
        adam_step(&mut store, &mut state, 0.01);
        let json = serde_json::to_string(&state).unwrap();
        let back: AdamState = serde_json::from_str(&json).unwrap();
        assert_eq!(back.step_count(), 1);
        assert_eq!(back.m, state.m);
        assert_eq!(back.v, state.v);
    }
}
