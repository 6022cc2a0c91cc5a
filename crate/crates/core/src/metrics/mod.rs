//! Objective evaluation: pitch/duration distribution similarity, melody
//! distance, Spearman rank correlation, and the controllability/ablation
//! harnesses built on them.

mod dtw;
mod histogram;
mod report;
mod spearman;
mod sweep;

pub use dtw::{dtw_mean_cost, melody_distance, pitch_series};
pub use histogram::{
    duration_distribution_similarity, duration_histogram, pitch_distribution_similarity,
    pitch_histogram,
};
pub use report::{evaluate_pairs, MetricReport, SongPairMetrics};
pub use spearman::spearman_rho;
pub use sweep::{ablation_table, controllability_csv, controllability_sweep, AblationRow, SweepRow};

use crate::attributes::AttributeError;

#[derive(Debug, thiserror::Error)]
pub enum MetricError {
    #[error("song `{0}` has no notes")]
    EmptySong(String),
    #[error("need at least 2 observations, got {0}")]
    TooShort(usize),
    #[error("length mismatch: {xs} vs {ys}")]
    LengthMismatch { xs: usize, ys: usize },
    #[error("{side} sequence has zero variance; rank correlation is undefined")]
    ZeroVariance { side: &'static str },
    #[error(transparent)]
    Attribute(#[from] AttributeError),
    #[error("sweep produced no successful generations")]
    NoSamples,
}
