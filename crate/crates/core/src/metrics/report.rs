//! Corpus-level metric report: per-song-pair PD/DD/MD plus their means,
//! with aligned-text and JSON renderings.

use serde::{Deserialize, Serialize};

use super::dtw::melody_distance;
use super::histogram::{duration_distribution_similarity, pitch_distribution_similarity};
use super::MetricError;
use crate::score::SongRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SongPairMetrics {
    pub id: String,
    pub pd: f64,
    pub dd: f64,
    pub md: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// Mean pitch distribution similarity, percent.
    pub pd: f64,
    /// Mean duration distribution similarity, percent.
    pub dd: f64,
    /// Mean melody distance.
    pub md: f64,
    pub songs: Vec<SongPairMetrics>,
}

impl MetricReport {
    /// Aligned text table, one row per song pair plus the mean row.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let id_w = self.songs.iter().map(|s| s.id.len()).max().unwrap_or(4).max(4);
        out.push_str(&format!("{:<id_w$}  {:>7}  {:>7}  {:>7}\n", "song", "PD%", "DD%", "MD"));
        for s in &self.songs {
            out.push_str(&format!(
                "{:<id_w$}  {:>7.2}  {:>7.2}  {:>7.3}\n",
                s.id, s.pd, s.dd, s.md
            ));
        }
        out.push_str(&format!(
            "{:<id_w$}  {:>7.2}  {:>7.2}  {:>7.3}\n",
            "mean", self.pd, self.dd, self.md
        ));
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("MetricReport is always serializable")
    }
}

/// Scores generated songs against their references, paired by position.
/// The pair's label is the generated song's id.
pub fn evaluate_pairs(pairs: &[(&SongRecord, &SongRecord)]) -> Result<MetricReport, MetricError> {
    assert!(!pairs.is_empty(), "evaluate_pairs: no pairs");
    let mut songs = Vec::with_capacity(pairs.len());
    for (generated, reference) in pairs {
        songs.push(SongPairMetrics {
            id: generated.id.clone(),
            pd: pitch_distribution_similarity(generated, reference)?,
            dd: duration_distribution_similarity(generated, reference)?,
            md: melody_distance(generated, reference)?,
        });
    }
    let n = songs.len() as f64;
    Ok(MetricReport {
        pd: songs.iter().map(|s| s.pd).sum::<f64>() / n,
        dd: songs.iter().map(|s| s.dd).sum::<f64>() / n,
        md: songs.iter().map(|s| s.md).sum::<f64>() / n,
        songs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::score::{gen_synthetic, CorpusSpec};

    #[test]
    fn self_evaluation_is_perfect() {
        let songs = gen_synthetic(&CorpusSpec::new(3, 5)).unwrap();
        let pairs: Vec<(&SongRecord, &SongRecord)> = songs.iter().map(|s| (s, s)).collect();
        let report = evaluate_pairs(&pairs).unwrap();
        assert_eq!(report.pd, 100.0);
        assert_eq!(report.dd, 100.0);
        assert_eq!(report.md, 0.0);
        assert_eq!(report.songs.len(), 3);
    }

    #[test]
    fn cross_evaluation_stays_in_range_and_round_trips_as_json() {
        let songs = gen_synthetic(&CorpusSpec::new(4, 9)).unwrap();
        let pairs: Vec<(&SongRecord, &SongRecord)> =
            songs.windows(2).map(|w| (&w[0], &w[1])).collect();
        let report = evaluate_pairs(&pairs).unwrap();
        for s in &report.songs {
            assert!((0.0..=100.0).contains(&s.pd), "pd {}", s.pd);
            assert!((0.0..=100.0).contains(&s.dd), "dd {}", s.dd);
            assert!(s.md >= 0.0, "md {}", s.md);
        }
        let back: MetricReport = serde_json::from_str(&report.to_json()).unwrap();
        assert_eq!(back, report);

        let text = report.to_text();
        assert!(text.contains("PD%") && text.contains("mean"));
        assert_eq!(text.lines().count(), report.songs.len() + 2);
    }
}
