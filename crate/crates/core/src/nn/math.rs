//! Scalar/row activation math shared by the autodiff graph and the cached
//! inference path, so both compute the identical functions.

/// Layer-norm variance epsilon.
pub const LN_EPS: f64 = 1e-5;

const GELU_C: f64 = 0.044_715;

/// GELU, tanh approximation.
pub fn gelu(x: f64) -> f64 {
    let u = (2.0 / std::f64::consts::PI).sqrt() * (x + GELU_C * x * x * x);
    0.5 * x * (1.0 + u.tanh())
}

/// d gelu(x) / dx.
pub fn gelu_grad(x: f64) -> f64 {
    let a = (2.0 / std::f64::consts::PI).sqrt();
    let u = a * (x + GELU_C * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * a * (1.0 + 3.0 * GELU_C * x * x)
}

/// Numerically stable in-place softmax of one row. `-inf` entries get
/// probability exactly zero.
pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Softmax backward for one row: `dx = p ⊙ (dy − ⟨dy, p⟩)`.
pub fn softmax_grad_row(p: &[f64], dy: &[f64], dx: &mut [f64]) {
    let dot: f64 = p.iter().zip(dy).map(|(a, b)| a * b).sum();
    for ((o, &pv), &dv) in dx.iter_mut().zip(p).zip(dy) {
        *o = pv * (dv - dot);
    }
}

/// Numerically stable `ln Σ exp`.
pub fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// In-place layer norm of one row with learned gain and bias.
pub fn layer_norm_row(row: &mut [f64], gain: &[f64], bias: &[f64]) {
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let inv = 1.0 / (var + LN_EPS).sqrt();
    for ((v, &g), &b) in row.iter_mut().zip(gain).zip(bias) {
        *v = (*v - mean) * inv * g + b;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gelu_fixed_points() {
        assert_eq!(gelu(0.0), 0.0);
        // gelu(x) → x for large x, → 0 for very negative x
        assert!((gelu(10.0) - 10.0).abs() < 1e-9);
        assert!(gelu(-10.0).abs() < 1e-9);
        // tanh approximation at 1.0, standard published value
        assert!((gelu(1.0) - 0.841192).abs() < 1e-6);
    }

    #[test]
    fn gelu_grad_matches_finite_difference() {
        for &x in &[-2.5, -0.7, 0.0, 0.3, 1.9] {
            let h = 1e-6;
            let numeric = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((gelu_grad(x) - numeric).abs() < 1e-8, "x = {x}");
        }
    }

    #[test]
    fn softmax_handles_neg_infinity_mask() {
        let mut row = vec![1.0, f64::NEG_INFINITY, 1.0];
        softmax_in_place(&mut row);
        assert_eq!(row[1], 0.0);
        assert!((row[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn log_sum_exp_is_shift_invariant() {
        let a = log_sum_exp(&[1.0, 2.0, 3.0]);
        let b = log_sum_exp(&[1001.0, 1002.0, 1003.0]);
        assert!((b - a - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn layer_norm_row_zero_mean_unit_var() {
        let mut row = vec![1.0, 2.0, 3.0, 4.0];
        let gain = vec![1.0; 4];
        let bias = vec![0.0; 4];
        layer_norm_row(&mut row, &gain, &bias);
        let mean: f64 = row.iter().sum::<f64>() / 4.0;
        let var: f64 = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-4); // eps keeps it just under 1
    }
}
