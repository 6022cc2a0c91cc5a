//! Row-major 2-D f64 tensor. Everything the models handle — token
//! sequences, parameter matrices, scalars — fits a 2-D layout, which keeps
//! shape handling trivial.

use ndarray::linalg::general_mat_mul;
use ndarray::{ArrayView2, ArrayViewMut2};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Tensor {
        Tensor { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Tensor {
        assert_eq!(
            data.len(),
            rows * cols,
            "tensor data length {} does not match shape ({rows}, {cols})",
            data.len()
        );
        Tensor { rows, cols, data }
    }

    pub fn scalar(v: f64) -> Tensor {
        Tensor::from_vec(1, 1, vec![v])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// The single value of a 1×1 tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.shape(), (1, 1), "item() on non-scalar tensor {:?}", self.shape());
        self.data[0]
    }

    /// `self += other`, same shape.
    pub fn add_assign(&mut self, other: &Tensor) {
        assert_eq!(self.shape(), other.shape(), "add_assign: shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// `self += c * other`, same shape.
    pub fn add_scaled(&mut self, other: &Tensor, c: f64) {
        assert_eq!(self.shape(), other.shape(), "add_scaled: shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
    }

    pub fn scale_in_place(&mut self, c: f64) {
        for a in &mut self.data {
            *a *= c;
        }
    }

    pub fn transpose(&self) -> Tensor {
        let mut out = Tensor::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((self.rows, self.cols), &self.data).expect("consistent shape")
    }

    pub fn view_mut(&mut self) -> ArrayViewMut2<'_, f64> {
        ArrayViewMut2::from_shape((self.rows, self.cols), &mut self.data).expect("consistent shape")
    }
}

/// `out = a · b` (allocating). Panics on inner-dimension mismatch.
pub fn matmul(a: &Tensor, b: &Tensor) -> Tensor {
    assert_eq!(
        a.cols,
        b.rows,
        "matmul: shape mismatch ({}, {}) vs ({}, {})",
        a.rows,
        a.cols,
        b.rows,
        b.cols
    );
    let mut out = Tensor::zeros(a.rows, b.cols);
    general_mat_mul(1.0, &a.view(), &b.view(), 0.0, &mut out.view_mut());
    out
}

/// `out += a · b`.
pub fn matmul_acc(out: &mut Tensor, a: &Tensor, b: &Tensor) {
    assert_eq!(a.cols, b.rows, "matmul_acc: inner dimension mismatch");
    assert_eq!(out.shape(), (a.rows, b.cols), "matmul_acc: output shape mismatch");
    general_mat_mul(1.0, &a.view(), &b.view(), 1.0, &mut out.view_mut());
}

/// `a · bᵀ` without materializing the transpose.
pub fn matmul_nt(a: &Tensor, b: &Tensor) -> Tensor {
    assert_eq!(
        a.cols,
        b.cols,
        "matmul_nt: shape mismatch ({}, {}) vs ({}, {})ᵀ",
        a.rows,
        a.cols,
        b.rows,
        b.cols
    );
    let mut out = Tensor::zeros(a.rows, b.rows);
    general_mat_mul(1.0, &a.view(), &b.view().t(), 0.0, &mut out.view_mut());
    out
}

/// `aᵀ · b` without materializing the transpose.
pub fn matmul_tn(a: &Tensor, b: &Tensor) -> Tensor {
    assert_eq!(
        a.rows,
        b.rows,
        "matmul_tn: shape mismatch ({}, {})ᵀ vs ({}, {})",
        a.rows,
        a.cols,
        b.rows,
        b.cols
    );
    let mut out = Tensor::zeros(a.cols, b.cols);
    general_mat_mul(1.0, &a.view().t(), &b.view(), 0.0, &mut out.view_mut());
    out
}

/// The standard sinusoidal positional-encoding table, shape `(len, dim)`.
pub fn sinusoidal_positions(len: usize, dim: usize) -> Tensor {
    let mut out = Tensor::zeros(len, dim);
    for t in 0..len {
        for i in 0..dim {
            let rate = 1.0 / 10_000f64.powf((2 * (i / 2)) as f64 / dim as f64);
            let angle = t as f64 * rate;
            out.set(t, i, if i % 2 == 0 { angle.sin() } else { angle.cos() });
        }
    }
    out
}
