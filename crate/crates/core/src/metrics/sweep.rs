//! Controllability sweep: drive one attribute across its classes, regenerate,
//! re-measure, and correlate. Plus the ablation comparison table.

use super::spearman::spearman_rho;
use super::{MetricError, MetricReport};
use crate::attributes::{compute_attributes, AttrId, QuantizerModel, NUM_ATTRIBUTES};
use crate::score::SongRecord;

/// One row of the controllability matrix: the swept attribute against every
/// measured attribute. `None` marks an undefined correlation (the measured
/// attribute never moved).
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub swept: AttrId,
    pub rho: [Option<f64>; NUM_ATTRIBUTES],
    /// (specified, measured) pairs that entered the correlation.
    pub pairs: usize,
    /// Generations that failed and were excluded.
    pub failures: usize,
}

/// Sweeps `swept` over `probes`, calling `generate(class, repeat)` for each
/// probe class and repeat index. Every sentence of a returned song
/// contributes one (specified class, re-measured class) pair per attribute;
/// the re-measured class comes from `quantizer` applied to the attributes
/// recomputed from the generated notes. Failed generations are counted and
/// skipped.
pub fn controllability_sweep<F, E>(
    swept: AttrId,
    probes: &[usize],
    repeats: usize,
    quantizer: &QuantizerModel,
    mut generate: F,
) -> Result<SweepRow, MetricError>
where
    F: FnMut(usize, usize) -> Result<SongRecord, E>,
    E: std::fmt::Display,
{
    assert!(probes.len() >= 2, "sweep needs at least two probe classes");
    assert!(repeats >= 1, "sweep needs at least one repeat per class");
    let mut specified: Vec<f64> = Vec::new();
    let mut measured: Vec<Vec<f64>> = vec![Vec::new(); NUM_ATTRIBUTES];
    let mut failures = 0usize;
    for &class in probes {
        for repeat in 0..repeats {
            let song = match generate(class, repeat) {
                Ok(song) => song,
                Err(e) => {
                    log::warn!("sweep {}: class {class} repeat {repeat} failed: {e}", swept.name());
                    failures += 1;
                    continue;
                }
            };
            for sentence in &song.sentences {
                let attrs = compute_attributes(sentence)?;
                let classes = quantizer.quantize(&attrs);
                specified.push(class as f64);
                for attr in AttrId::ALL {
                    measured[attr.index()].push(classes.get(attr) as f64);
                }
            }
        }
    }
    if specified.is_empty() {
        return Err(MetricError::NoSamples);
    }
    let mut rho = [None; NUM_ATTRIBUTES];
    for attr in AttrId::ALL {
        rho[attr.index()] = match spearman_rho(&specified, &measured[attr.index()]) {
            Ok(r) => Some(r),
            Err(MetricError::ZeroVariance { .. }) => None,
            Err(e) => return Err(e),
        };
    }
    Ok(SweepRow { swept, rho, pairs: specified.len(), failures })
}

/// Renders sweep rows as CSV: one line per swept attribute, one column per
/// measured attribute, `nan` for undefined entries.
pub fn controllability_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("swept");
    for attr in AttrId::ALL {
        out.push(',');
        out.push_str(attr.name());
    }
    out.push_str(",pairs,failures\n");
    for row in rows {
        out.push_str(row.swept.name());
        for attr in AttrId::ALL {
            match row.rho[attr.index()] {
                Some(r) => out.push_str(&format!(",{r:.4}")),
                None => out.push_str(",nan"),
            }
        }
        out.push_str(&format!(",{},{}\n", row.pairs, row.failures));
    }
    out
}

/// One labeled configuration in an ablation comparison.
#[derive(Debug, Clone)]
pub struct AblationRow {
    pub label: String,
    pub report: MetricReport,
}

/// Renders an aligned text table of PD/DD/MD per configuration.
pub fn ablation_table(rows: &[AblationRow]) -> String {
    let label_w = rows.iter().map(|r| r.label.len()).max().unwrap_or(5).max(5);
    let mut out = format!("{:<label_w$}  {:>7}  {:>7}  {:>7}\n", "model", "PD%", "DD%", "MD");
    for row in rows {
        out.push_str(&format!(
            "{:<label_w$}  {:>7.2}  {:>7.2}  {:>7.3}\n",
            row.label, row.report.pd, row.report.dd, row.report.md
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attributes::fit_quantizer_values;
    use crate::score::{Note, SentenceRecord, SongRecord, Syllable, WordSpan};

    /// A one-sentence song whose mean pitch is `base` and whose other
    /// attributes barely move.
    fn pitched_song(base: u8, wiggle: u8) -> SongRecord {
        let notes = vec![
            Note::new(0, 4, base),
            Note::new(4, 4, base + wiggle),
            Note::new(8, 4, base),
            Note::new(12, 4, base + wiggle),
        ];
        let syllables = (0..4)
            .map(|i| Syllable { text: "la".into(), tone: 0, note_indices: vec![i] })
            .collect();
        SongRecord {
            id: format!("probe-{base}"),
            key: 0,
            emotion: 0,
            bpm: 120.0,
            sentences: vec![SentenceRecord {
                structure: 0,
                syllables,
                words: vec![WordSpan { start: 0, end: 3, pos: 0 }],
                notes,
            }],
        }
    }

    /// Quantizer fitted so that PM classes line up with the probe pitches.
    fn quantizer_for(k: usize) -> QuantizerModel {
        let mut values: Vec<Vec<f64>> = vec![Vec::new(); NUM_ATTRIBUTES];
        for class in 0..k {
            let song = pitched_song(40 + 4 * class as u8, 1);
            let attrs = compute_attributes(&song.sentences[0]).unwrap();
            for attr in AttrId::ALL {
                values[attr.index()].push(attrs.get(attr));
            }
        }
        fit_quantizer_values(&values, k).unwrap()
    }

    #[test]
    fn a_perfect_controller_scores_rho_one_on_its_own_attribute() {
        let k = 4;
        let quantizer = quantizer_for(k);
        let row = controllability_sweep(
            AttrId::Pm,
            &[0, 1, 2, 3],
            2,
            &quantizer,
            |class, _| Ok::<_, std::convert::Infallible>(pitched_song(40 + 4 * class as u8, 1)),
        )
        .unwrap();
        assert_eq!(row.pairs, 8);
        assert_eq!(row.failures, 0);
        let pm = row.rho[AttrId::Pm.index()].expect("PM must vary");
        assert!((pm - 1.0).abs() < 1e-12, "perfect controller must give ρ=1, got {pm}");
        // Attributes that never moved are undefined, not zero.
        assert!(row.rho[AttrId::Nd.index()].is_none(), "note density never varied");
    }

    #[test]
    fn failed_generations_are_counted_and_skipped() {
        let quantizer = quantizer_for(4);
        let row = controllability_sweep(AttrId::Pm, &[0, 1, 2, 3], 1, &quantizer, |class, _| {
            if class == 2 {
                Err("synthetic failure")
            } else {
                Ok(pitched_song(40 + 4 * class as u8, 1))
            }
        })
        .unwrap();
        assert_eq!(row.failures, 1);
        assert_eq!(row.pairs, 3);
    }

    #[test]
    fn all_failures_is_an_explicit_error() {
        let quantizer = quantizer_for(4);
        let out = controllability_sweep(AttrId::Pm, &[0, 1], 1, &quantizer, |_, _| {
            Err::<SongRecord, _>("down")
        });
        assert!(matches!(out, Err(MetricError::NoSamples)));
    }

    #[test]
    fn csv_has_one_column_per_attribute() {
        let quantizer = quantizer_for(4);
        let row = controllability_sweep(AttrId::Pm, &[0, 1, 2, 3], 1, &quantizer, |class, _| {
            Ok::<_, std::convert::Infallible>(pitched_song(40 + 4 * class as u8, 1))
        })
        .unwrap();
        let csv = controllability_csv(&[row]);
        let mut lines = csv.lines();
        let header = lines.next().unwrap();
        assert_eq!(header.split(',').count(), 1 + NUM_ATTRIBUTES + 2);
        assert!(header.starts_with("swept,PM,PV,"));
        let body = lines.next().unwrap();
        assert!(body.starts_with("PM,1.0000,"));
        assert!(body.contains(",nan,"), "undefined entries must be nan");
    }

    #[test]
    fn ablation_table_lines_up() {
        let report = MetricReport { pd: 86.35, dd: 93.5, md: 1.27, songs: vec![] };
        let better = MetricReport { pd: 97.98, dd: 98.62, md: 0.25, songs: vec![] };
        let table = ablation_table(&[
            AblationRow { label: "full".into(), report },
            AblationRow { label: "with-learned".into(), report: better },
        ]);
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[1].contains("86.35") && lines[1].contains("1.270"));
        assert!(lines[2].starts_with("with-learned"));
    }
}
