//! Nearest-code lookup against the shared grouped codebook.

use crate::nn::Tensor;

/// Index of the codebook row closest to `slice` in Euclidean distance.
/// Ties go to the lowest index so lookup is deterministic.
pub fn nearest_code(slice: &[f64], codebook: &Tensor) -> usize {
    assert_eq!(
        slice.len(),
        codebook.cols(),
        "nearest_code: slice width {} vs codebook width {}",
        slice.len(),
        codebook.cols()
    );
    let mut best = 0usize;
    let mut best_d = f64::INFINITY;
    for r in 0..codebook.rows() {
        let row = codebook.row(r);
        let mut d = 0.0;
        for (a, b) in slice.iter().zip(row) {
            let diff = a - b;
            d += diff * diff;
        }
        if d < best_d {
            best_d = d;
            best = r;
        }
    }
    best
}

/// Quantize a latent by splitting it into `groups` equal slices and snapping
/// each slice to its nearest codebook row. Returns the chosen row index per
/// group and the concatenated quantized vector.
pub fn quantize_grouped(z: &[f64], codebook: &Tensor, groups: usize) -> (Vec<usize>, Vec<f64>) {
    assert!(groups > 0, "quantize_grouped: groups must be positive");
    assert_eq!(
        z.len() % groups,
        0,
        "quantize_grouped: latent width {} not divisible by {} groups",
        z.len(),
        groups
    );
    let width = z.len() / groups;
    assert_eq!(
        width,
        codebook.cols(),
        "quantize_grouped: group width {} vs codebook width {}",
        width,
        codebook.cols()
    );
    let mut codes = Vec::with_capacity(groups);
    let mut zq = Vec::with_capacity(z.len());
    for gidx in 0..groups {
        let slice = &z[gidx * width..(gidx + 1) * width];
        let code = nearest_code(slice, codebook);
        codes.push(code);
        zq.extend_from_slice(codebook.row(code));
    }
    (codes, zq)
}
