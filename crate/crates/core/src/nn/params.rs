//! Named parameter tensors with matching gradient slots.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tensor::Tensor;

/// Parameters and their gradients, keyed by name. Iteration order is the
/// name order (BTreeMap), so optimizer passes are deterministic.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    params: BTreeMap<String, Tensor>,
    #[serde(skip)]
    grads: BTreeMap<String, Tensor>,
}

impl ParamStore {
    pub fn new() -> ParamStore {
        ParamStore::default()
    }

    /// Registers a parameter; names must be unique.
    pub fn insert(&mut self, name: &str, tensor: Tensor) {
        let prev = self.params.insert(name.to_string(), tensor);
        assert!(prev.is_none(), "duplicate parameter name {name}");
    }

    /// Registers a parameter drawn from U(−scale, scale).
    pub fn init_uniform(&mut self, name: &str, rows: usize, cols: usize, scale: f64, rng: &mut ChaCha8Rng) {
        let data = (0..rows * cols).map(|_| rng.gen_range(-scale..scale)).collect();
        self.insert(name, Tensor::from_vec(rows, cols, data));
    }

    /// Registers an all-zero parameter (biases, layer-norm offsets).
    pub fn init_zeros(&mut self, name: &str, rows: usize, cols: usize) {
        self.insert(name, Tensor::zeros(rows, cols));
    }

    /// Registers an all-one parameter (layer-norm gains).
    pub fn init_ones(&mut self, name: &str, rows: usize, cols: usize) {
        self.insert(name, Tensor::from_vec(rows, cols, vec![1.0; rows * cols]));
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn get(&self, name: &str) -> &Tensor {
        self.params.get(name).unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Tensor {
        self.params.get_mut(name).unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    /// The accumulated gradient of a parameter, if any backward pass has
    /// touched it since the last [`ParamStore::zero_grads`].
    pub fn grad(&self, name: &str) -> Option<&Tensor> {
        self.grads.get(name)
    }

    pub fn accumulate_grad(&mut self, name: &str, grad: &Tensor) {
        let param = self.params.get(name).unwrap_or_else(|| panic!("unknown parameter {name}"));
        assert_eq!(param.shape(), grad.shape(), "gradient shape mismatch for {name}");
        self.grads
            .entry(name.to_string())
            .or_insert_with(|| Tensor::zeros(grad.rows(), grad.cols()))
            .add_assign(grad);
    }

    pub fn zero_grads(&mut self) {
        self.grads.clear();
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.params.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn num_tensors(&self) -> usize {
        self.params.len()
    }

    pub fn num_values(&self) -> usize {
        self.params.values().map(Tensor::len).sum()
    }

    /// Global L2 norm of all gradients (diagnostics and clipping).
    pub fn grad_norm(&self) -> f64 {
        self.grads
            .values()
            .flat_map(|g| g.data().iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    /// Multiplies every gradient by `factor` (global-norm clipping).
    pub fn scale_grads(&mut self, factor: f64) {
        for g in self.grads.values_mut() {
            g.scale_in_place(factor);
        }
    }
}
