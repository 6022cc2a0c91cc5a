//! Sentence-level statistical musical attributes and the equal-frequency
//! quantizer that maps them to class indices for conditioning.
//!
//! Twelve attributes are computed per sentence-level melody: pitch mean (PM),
//! pitch variance (PV), pitch range (PR), direction of melodic motion (DMM),
//! amount of arpeggiation (AA), chromatic motion (CM), duration mean (DM),
//! duration variance (DV), duration range (DR), prevalence of the most common
//! duration (MCD), note density (ND), and the syllable-to-note ratio (Align).
//! Interval-based attributes use population conventions over consecutive note
//! pairs; variance is population variance throughout.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::score::{SentenceRecord, SongRecord, TICKS_PER_QUARTER};

/// Intervals (in semitones, absolute) counted as arpeggiation: unison,
/// thirds, fifth, sevenths, octave, and tenths.
pub const ARPEGGIATION_INTERVALS: [u32; 9] = [0, 3, 4, 7, 10, 11, 12, 15, 16];

/// Number of statistical attributes.
pub const NUM_ATTRIBUTES: usize = 12;

/// Identifies one of the 12 attributes; the order matches the condition
/// concatenation order used by the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AttrId {
    Pm,
    Pv,
    Pr,
    Dmm,
    Aa,
    Cm,
    Dm,
    Dv,
    Dr,
    Mcd,
    Nd,
    Align,
}

impl AttrId {
    pub const ALL: [AttrId; NUM_ATTRIBUTES] = [
        AttrId::Pm,
        AttrId::Pv,
        AttrId::Pr,
        AttrId::Dmm,
        AttrId::Aa,
        AttrId::Cm,
        AttrId::Dm,
        AttrId::Dv,
        AttrId::Dr,
        AttrId::Mcd,
        AttrId::Nd,
        AttrId::Align,
    ];

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&a| a == self).unwrap()
    }

    pub fn name(self) -> &'static str {
        match self {
            AttrId::Pm => "PM",
            AttrId::Pv => "PV",
            AttrId::Pr => "PR",
            AttrId::Dmm => "DMM",
            AttrId::Aa => "AA",
            AttrId::Cm => "CM",
            AttrId::Dm => "DM",
            AttrId::Dv => "DV",
            AttrId::Dr => "DR",
            AttrId::Mcd => "MCD",
            AttrId::Nd => "ND",
            AttrId::Align => "Align",
        }
    }

    pub fn from_name(name: &str) -> Option<AttrId> {
        Self::ALL.into_iter().find(|a| a.name() == name)
    }
}

/// Raw values of the 12 attributes for one sentence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttributeVector {
    /// Mean pitch (MIDI units).
    pub pm: f64,
    /// Population variance of pitch.
    pub pv: f64,
    /// Pitch range, max - min (semitones).
    pub pr: f64,
    /// Fraction of consecutive intervals that rise.
    pub dmm: f64,
    /// Fraction of consecutive intervals in [`ARPEGGIATION_INTERVALS`].
    pub aa: f64,
    /// Fraction of consecutive intervals of exactly one semitone.
    pub cm: f64,
    /// Mean duration (ticks).
    pub dm: f64,
    /// Population variance of duration.
    pub dv: f64,
    /// Duration range (ticks).
    pub dr: f64,
    /// Count of the modal duration divided by the note count.
    pub mcd: f64,
    /// Notes per beat over the sounding span.
    pub nd: f64,
    /// Syllables divided by notes; in (0, 1] for valid sentences.
    pub align: f64,
}

impl AttributeVector {
    pub fn get(&self, attr: AttrId) -> f64 {
        match attr {
            AttrId::Pm => self.pm,
            AttrId::Pv => self.pv,
            AttrId::Pr => self.pr,
            AttrId::Dmm => self.dmm,
            AttrId::Aa => self.aa,
            AttrId::Cm => self.cm,
            AttrId::Dm => self.dm,
            AttrId::Dv => self.dv,
            AttrId::Dr => self.dr,
            AttrId::Mcd => self.mcd,
            AttrId::Nd => self.nd,
            AttrId::Align => self.align,
        }
    }

    pub fn to_array(&self) -> [f64; NUM_ATTRIBUTES] {
        let mut out = [0.0; NUM_ATTRIBUTES];
        for (i, a) in AttrId::ALL.iter().enumerate() {
            out[i] = self.get(*a);
        }
        out
    }
}

/// Class indices (0..K-1) of the 12 attributes for one sentence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeClassVector(pub [usize; NUM_ATTRIBUTES]);

impl AttributeClassVector {
    pub fn get(&self, attr: AttrId) -> usize {
        self.0[attr.index()]
    }
}

#[derive(Debug, Error)]
pub enum AttributeError {
    #[error("cannot compute attributes of an empty sentence")]
    EmptySentence,
    #[error("quantizer needs at least K={k} sentences, corpus has {n}")]
    TooFewSentences { k: usize, n: usize },
    #[error("quantizer model parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("quantizer I/O: {0}")]
    Io(#[from] std::io::Error),
}

/// Computes the 12 raw attributes of one sentence-level melody.
///
/// Sentences with fewer than two notes have no intervals; DMM, AA, and CM are
/// defined as 0 there so conditioning stays total.
pub fn compute_attributes(sentence: &SentenceRecord) -> Result<AttributeVector, AttributeError> {
    let notes = &sentence.notes;
    if notes.is_empty() || sentence.syllables.is_empty() {
        return Err(AttributeError::EmptySentence);
    }
    let n = notes.len() as f64;

    let pitches: Vec<f64> = notes.iter().map(|x| x.pitch as f64).collect();
    let durations: Vec<f64> = notes.iter().map(|x| x.duration as f64).collect();

    let pm = mean(&pitches);
    let pv = pop_variance(&pitches, pm);
    let pr = max(&pitches) - min(&pitches);
    let dm = mean(&durations);
    let dv = pop_variance(&durations, dm);
    let dr = max(&durations) - min(&durations);

    let (mut rising, mut arpeggio, mut chromatic) = (0usize, 0usize, 0usize);
    for pair in notes.windows(2) {
        let interval = pair[1].pitch as i32 - pair[0].pitch as i32;
        if interval > 0 {
            rising += 1;
        }
        if ARPEGGIATION_INTERVALS.contains(&interval.unsigned_abs()) {
            arpeggio += 1;
        }
        if interval.abs() == 1 {
            chromatic += 1;
        }
    }
    let pairs = notes.len().saturating_sub(1);
    let (dmm, aa, cm) = if pairs == 0 {
        (0.0, 0.0, 0.0)
    } else {
        (rising as f64 / pairs as f64, arpeggio as f64 / pairs as f64, chromatic as f64 / pairs as f64)
    };

    let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
    for note in notes {
        *counts.entry(note.duration).or_insert(0) += 1;
    }
    let modal_count = counts.values().copied().max().unwrap_or(0);
    let mcd = modal_count as f64 / n;

    let span_ticks = (notes.last().unwrap().offset() - notes[0].onset).max(1);
    let nd = n / (span_ticks as f64 / TICKS_PER_QUARTER as f64);

    let align = sentence.num_syllables() as f64 / n;

    Ok(AttributeVector { pm, pv, pr, dmm, aa, cm, dm, dv, dr, mcd, nd, align })
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn pop_variance(xs: &[f64], m: f64) -> f64 {
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64
}

fn min(xs: &[f64]) -> f64 {
    xs.iter().copied().fold(f64::INFINITY, f64::min)
}

fn max(xs: &[f64]) -> f64 {
    xs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Per-attribute equal-frequency quantizer fitted on a training corpus.
///
/// For each attribute, `edges` holds the K-1 empirical i/K quantiles of the
/// per-sentence raw values (edge i at sorted index `ceil(i*n/K) - 1`) and
/// `representatives` the per-bin median used by [`dequantize`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizerModel {
    pub k: usize,
    pub edges: Vec<Vec<f64>>,
    pub representatives: Vec<Vec<f64>>,
    /// Class of the fitted median value, per attribute; used as the neutral
    /// class when a caller asks for "auto" conditioning.
    pub median_class: Vec<usize>,
}

/// Fits the K-class equal-frequency quantizer over all sentences of a corpus.
pub fn fit_quantizer(corpus: &[SongRecord], k: usize) -> Result<QuantizerModel, AttributeError> {
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); NUM_ATTRIBUTES];
    for song in corpus {
        for sentence in &song.sentences {
            let v = compute_attributes(sentence)?;
            for (slot, value) in values.iter_mut().zip(v.to_array()) {
                slot.push(value);
            }
        }
    }
    let n = values[0].len();
    if n < k {
        return Err(AttributeError::TooFewSentences { k, n });
    }
    fit_quantizer_values(&values, k)
}

/// Fits the quantizer from pre-collected per-sentence raw values
/// (`values[attribute][sentence]`).
pub fn fit_quantizer_values(values: &[Vec<f64>], k: usize) -> Result<QuantizerModel, AttributeError> {
    assert_eq!(values.len(), NUM_ATTRIBUTES, "need one value column per attribute");
    let n = values[0].len();
    if n < k {
        return Err(AttributeError::TooFewSentences { k, n });
    }

    let mut edges = Vec::with_capacity(NUM_ATTRIBUTES);
    let mut representatives = Vec::with_capacity(NUM_ATTRIBUTES);
    let mut median_class = Vec::with_capacity(NUM_ATTRIBUTES);
    for column in values {
        let mut sorted = column.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut attr_edges = Vec::with_capacity(k - 1);
        for i in 1..k {
            let idx = (i * n).div_ceil(k) - 1;
            attr_edges.push(sorted[idx]);
        }

        // Per-bin medians of the training values that fall in each bin; empty
        // bins (possible under heavy ties) inherit the previous representative.
        let mut bins: Vec<Vec<f64>> = vec![Vec::new(); k];
        for &v in &sorted {
            bins[class_of(v, &attr_edges)].push(v);
        }
        let mut reps = Vec::with_capacity(k);
        for (b, bin) in bins.iter().enumerate() {
            let rep = if bin.is_empty() {
                if b == 0 {
                    sorted[0]
                } else {
                    reps[b - 1]
                }
            } else {
                median_sorted(bin)
            };
            reps.push(rep);
        }

        median_class.push(class_of(median_sorted(&sorted), &attr_edges));
        edges.push(attr_edges);
        representatives.push(reps);
    }
    Ok(QuantizerModel { k, edges, representatives, median_class })
}

fn median_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Class = number of edges strictly below the value; ties on an edge map to
/// the lower class.
fn class_of(value: f64, edges: &[f64]) -> usize {
    edges.partition_point(|&e| e < value)
}

impl QuantizerModel {
    pub fn quantize_value(&self, attr: AttrId, value: f64) -> usize {
        class_of(value, &self.edges[attr.index()])
    }

    pub fn quantize(&self, v: &AttributeVector) -> AttributeClassVector {
        let mut out = [0usize; NUM_ATTRIBUTES];
        for (i, attr) in AttrId::ALL.iter().enumerate() {
            out[i] = self.quantize_value(*attr, v.get(*attr));
        }
        AttributeClassVector(out)
    }

    pub fn dequantize_value(&self, attr: AttrId, class: usize) -> f64 {
        self.representatives[attr.index()][class.min(self.k - 1)]
    }

    pub fn dequantize(&self, c: &AttributeClassVector) -> AttributeVector {
        let g = |a: AttrId| self.dequantize_value(a, c.get(a));
        AttributeVector {
            pm: g(AttrId::Pm),
            pv: g(AttrId::Pv),
            pr: g(AttrId::Pr),
            dmm: g(AttrId::Dmm),
            aa: g(AttrId::Aa),
            cm: g(AttrId::Cm),
            dm: g(AttrId::Dm),
            dv: g(AttrId::Dv),
            dr: g(AttrId::Dr),
            mcd: g(AttrId::Mcd),
            nd: g(AttrId::Nd),
            align: g(AttrId::Align),
        }
    }

    /// Text serialization: a header line, then per attribute one `edges` and
    /// one `reps` line of `Display`-formatted floats (exact round-trip).
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "quantizer v1 k={}", self.k).unwrap();
        for (i, attr) in AttrId::ALL.iter().enumerate() {
            writeln!(out, "{} median_class={}", attr.name(), self.median_class[i]).unwrap();
            writeln!(out, "edges {}", join_floats(&self.edges[i])).unwrap();
            writeln!(out, "reps {}", join_floats(&self.representatives[i])).unwrap();
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, AttributeError> {
        let parse = |line: usize, message: &str| AttributeError::Parse { line, message: message.into() };
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| parse(1, "empty file"))?;
        let k: usize = header
            .strip_prefix("quantizer v1 k=")
            .ok_or_else(|| parse(1, "bad header"))?
            .parse()
            .map_err(|_| parse(1, "bad K"))?;
        let mut edges = Vec::new();
        let mut representatives = Vec::new();
        let mut median_class = Vec::new();
        for attr in AttrId::ALL {
            let (ln, name_line) = lines.next().ok_or_else(|| parse(0, "truncated"))?;
            let mut parts = name_line.split_whitespace();
            if parts.next() != Some(attr.name()) {
                return Err(parse(ln + 1, &format!("expected attribute {}", attr.name())));
            }
            let mc = parts
                .next()
                .and_then(|s| s.strip_prefix("median_class="))
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| parse(ln + 1, "bad median_class"))?;
            median_class.push(mc);
            for (label, target) in [("edges", &mut edges), ("reps", &mut representatives)] {
                let (ln, line) = lines.next().ok_or_else(|| parse(0, "truncated"))?;
                let rest = line
                    .strip_prefix(label)
                    .ok_or_else(|| parse(ln + 1, &format!("expected {label} line")))?;
                let vals: Result<Vec<f64>, _> = rest.split_whitespace().map(str::parse).collect();
                target.push(vals.map_err(|e| parse(ln + 1, &format!("bad float: {e}")))?);
            }
        }
        for (i, attr) in AttrId::ALL.iter().enumerate() {
            if edges[i].len() != k - 1 || representatives[i].len() != k {
                return Err(parse(0, &format!("wrong edge/rep count for {}", attr.name())));
            }
        }
        Ok(QuantizerModel { k, edges, representatives, median_class })
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<(), AttributeError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, AttributeError> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

fn join_floats(xs: &[f64]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}
