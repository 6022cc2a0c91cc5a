//! Nearest-code lookup checked against an independent distance routine,
//! including engineered exact ties and grouped quantization structure.

use l2m_core::nn::Tensor;
use l2m_core::vq::{nearest_code, quantize_grouped};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Baseline argmin with a different accumulation (`mul_add`), breaking ties
/// toward the lowest row index.
fn oracle_nearest(slice: &[f64], codebook: &Tensor) -> usize {
    let dist = |r: usize| -> f64 {
        let mut acc = 0.0f64;
        for (c, &x) in slice.iter().enumerate() {
            let diff = x - codebook.row(r)[c];
            acc = diff.mul_add(diff, acc);
        }
        acc
    };
    let mut best = 0;
    for r in 1..codebook.rows() {
        if dist(r) < dist(best) {
            best = r;
        }
    }
    best
}

fn random_codebook(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-2.0..2.0)).collect())
}

#[test]
fn a_thousand_lookups_match_the_independent_argmin() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for &(rows, cols) in &[(64usize, 8usize), (16, 4), (128, 2)] {
        let codebook = random_codebook(&mut rng, rows, cols);
        for _ in 0..1_000 {
            let z: Vec<f64> = (0..cols).map(|_| rng.gen_range(-2.5..2.5)).collect();
            assert_eq!(nearest_code(&z, &codebook), oracle_nearest(&z, &codebook));
        }
    }
}

#[test]
fn exact_ties_snap_to_the_lowest_row() {
    // Rows 1 and 3 are both at squared distance 1 from the origin, and the
    // arithmetic is exact in both implementations (small integers).
    let codebook = Tensor::from_vec(
        4,
        4,
        vec![
            3.0, 0.0, 0.0, 0.0, // d² = 9
            1.0, 0.0, 0.0, 0.0, // d² = 1
            0.0, 2.0, 0.0, 0.0, // d² = 4
            0.0, 0.0, 0.0, -1.0, // d² = 1
        ],
    );
    let origin = [0.0; 4];
    assert_eq!(nearest_code(&origin, &codebook), 1);
    assert_eq!(oracle_nearest(&origin, &codebook), 1);

    // Duplicate rows always tie; the first copy wins.
    let dup = Tensor::from_vec(3, 2, vec![5.0, 5.0, 1.0, -1.0, 1.0, -1.0]);
    assert_eq!(nearest_code(&[0.9, -1.1], &dup), 1);
}

#[test]
fn grouped_quantization_is_per_group_lookup_plus_concat() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let codebook = random_codebook(&mut rng, 32, 6);
    for _ in 0..200 {
        let groups = rng.gen_range(1..=5);
        let z: Vec<f64> = (0..groups * 6).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let (codes, zq) = quantize_grouped(&z, &codebook, groups);
        assert_eq!(codes.len(), groups);
        assert_eq!(zq.len(), z.len());
        for g in 0..groups {
            let slice = &z[g * 6..(g + 1) * 6];
            assert_eq!(codes[g], oracle_nearest(slice, &codebook));
            // The quantized block is the chosen codebook row, bit for bit.
            assert_eq!(&zq[g * 6..(g + 1) * 6], codebook.row(codes[g]));
        }
    }
}

#[test]
fn quantization_error_never_exceeds_any_single_code_distance() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let codebook = random_codebook(&mut rng, 24, 5);
    for _ in 0..500 {
        let z: Vec<f64> = (0..5).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let chosen = nearest_code(&z, &codebook);
        let d = |r: usize| -> f64 {
            codebook.row(r).iter().zip(&z).map(|(a, b)| (a - b) * (a - b)).sum()
        };
        let chosen_d = d(chosen);
        for r in 0..codebook.rows() {
            assert!(
                chosen_d <= d(r) + 1e-12,
                "code {chosen} (d²={chosen_d}) beaten by {r} (d²={})",
                d(r)
            );
        }
    }
}
