//! Deterministic synthetic corpus generator.
//!
//! Produces valid aligned songs with wide, largely independent per-sentence
//! spread in the statistical attributes so that quantizers and conditioned
//! models have signal to learn from. Optional per-attribute target bands are
//! enforced by guided sampling plus rejection; bands that cannot be hit fail
//! with an error instead of silently drifting.

use std::collections::BTreeMap;

use rand_chacha::ChaCha8Rng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attributes::{compute_attributes, AttrId};
use crate::lyric::ToneTable;
use crate::score::{Note, SentenceRecord, SongRecord, Syllable, WordSpan, MAX_DURATION_TICKS};

/// Maximum notes a single syllable may carry in generated songs.
const MAX_MELISMA: usize = 4;
/// Attempts per sentence before a target band is declared unreachable.
const MAX_ATTEMPTS: usize = 400;

/// Optional `[lo, hi]` bands on the raw per-sentence attributes, keyed by
/// attribute name (`PM`, `DM`, ...).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AttributeTargets {
    bands: BTreeMap<String, (f64, f64)>,
}

impl AttributeTargets {
    pub fn set(&mut self, attr: AttrId, lo: f64, hi: f64) {
        self.bands.insert(attr.name().to_string(), (lo, hi));
    }

    pub fn with(mut self, attr: AttrId, lo: f64, hi: f64) -> Self {
        self.set(attr, lo, hi);
        self
    }

    pub fn get(&self, attr: AttrId) -> Option<(f64, f64)> {
        self.bands.get(attr.name()).copied()
    }

    pub fn is_empty(&self) -> bool {
        self.bands.is_empty()
    }

    fn validate(&self) -> Result<(), SynthError> {
        for (name, &(lo, hi)) in &self.bands {
            let attr = AttrId::from_name(name)
                .ok_or_else(|| SynthError::UnknownAttribute(name.clone()))?;
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(SynthError::InfeasibleTarget {
                    detail: format!("{name} band [{lo}, {hi}] is not a valid interval"),
                });
            }
            let (flo, fhi) = feasible_range(attr);
            if hi < flo || lo > fhi {
                return Err(SynthError::InfeasibleTarget {
                    detail: format!("{name} band [{lo}, {hi}] outside feasible range [{flo}, {fhi}]"),
                });
            }
        }
        // A flat melody (PR = 0) has zero pitch variance by definition.
        if let (Some((_, pr_hi)), Some((pv_lo, _))) = (self.get(AttrId::Pr), self.get(AttrId::Pv)) {
            if pr_hi <= 0.0 && pv_lo > 0.0 {
                return Err(SynthError::InfeasibleTarget {
                    detail: "PR target 0 forces PV = 0, but the PV band excludes 0".into(),
                });
            }
        }
        Ok(())
    }
}

fn feasible_range(attr: AttrId) -> (f64, f64) {
    match attr {
        AttrId::Pm => (0.0, 127.0),
        AttrId::Pv | AttrId::Dv => (0.0, 4032.25), // ((max-min)/2)^2
        AttrId::Pr => (0.0, 127.0),
        AttrId::Dmm | AttrId::Aa | AttrId::Cm => (0.0, 1.0),
        AttrId::Dm => (1.0, MAX_DURATION_TICKS as f64),
        AttrId::Dr => (0.0, (MAX_DURATION_TICKS - 1) as f64),
        AttrId::Mcd => (0.0, 1.0),
        AttrId::Nd => (0.125, 16.0), // 1 note per 2 bars .. 16th-tick chain
        AttrId::Align => (0.25, 1.0),
    }
}

/// What to generate: song count, RNG seed, size ranges, attribute bands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSpec {
    pub num_songs: usize,
    pub seed: u64,
    /// Inclusive range of sentences per song.
    pub sentences_per_song: (usize, usize),
    /// Inclusive range of syllables per sentence.
    pub syllables_per_sentence: (usize, usize),
    #[serde(default)]
    pub targets: AttributeTargets,
}

impl CorpusSpec {
    pub fn new(num_songs: usize, seed: u64) -> Self {
        CorpusSpec {
            num_songs,
            seed,
            sentences_per_song: (2, 4),
            syllables_per_sentence: (3, 8),
            targets: AttributeTargets::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("numSongs must be at least 1")]
    EmptySpec,
    #[error("bad {field} range: {detail}")]
    BadRange { field: &'static str, detail: String },
    #[error("unknown attribute name in targets: {0}")]
    UnknownAttribute(String),
    #[error("infeasible target: {detail}")]
    InfeasibleTarget { detail: String },
    #[error("song {song} sentence {sentence}: no candidate hit the target bands after {attempts} attempts (last miss: {detail})")]
    RejectionExhausted { song: usize, sentence: usize, attempts: usize, detail: String },
}

/// Generates a deterministic synthetic corpus; pure function of the spec.
pub fn gen_synthetic(spec: &CorpusSpec) -> Result<Vec<SongRecord>, SynthError> {
    if spec.num_songs == 0 {
        return Err(SynthError::EmptySpec);
    }
    check_range("sentences_per_song", spec.sentences_per_song, 1)?;
    check_range("syllables_per_sentence", spec.syllables_per_sentence, 1)?;
    spec.targets.validate()?;

    let inventory: Vec<(String, u8)> = ToneTable::bundled()
        .entries()
        .map(|(s, c)| (s.to_string(), c))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut songs = Vec::with_capacity(spec.num_songs);
    for song_idx in 0..spec.num_songs {
        songs.push(gen_song(spec, song_idx, &inventory, &mut rng)?);
    }
    Ok(songs)
}

fn check_range(field: &'static str, (lo, hi): (usize, usize), min: usize) -> Result<(), SynthError> {
    if lo < min || lo > hi {
        return Err(SynthError::BadRange {
            field,
            detail: format!("({lo}, {hi}) must satisfy {min} <= lo <= hi"),
        });
    }
    Ok(())
}

fn gen_song(
    spec: &CorpusSpec,
    song_idx: usize,
    inventory: &[(String, u8)],
    rng: &mut ChaCha8Rng,
) -> Result<SongRecord, SynthError> {
    let num_sentences = rng.gen_range(spec.sentences_per_song.0..=spec.sentences_per_song.1);
    let bpm = *choose(rng, &[66.0, 72.0, 84.0, 90.0, 96.0, 104.0, 112.0, 120.0, 132.0]);
    let key = rng.gen_range(0..crate::score::NUM_KEYS as u8);
    let emotion = rng.gen_range(0..crate::score::NUM_EMOTIONS as u8);

    let mut sentences = Vec::with_capacity(num_sentences);
    let mut cursor: u32 = 0;
    for sentence_idx in 0..num_sentences {
        let sentence = gen_sentence(spec, song_idx, sentence_idx, cursor, inventory, rng)?;
        cursor = sentence.notes.last().unwrap().offset() + *choose(rng, &[0, 0, 0, 4, 8, 16]);
        sentences.push(sentence);
    }

    Ok(SongRecord {
        id: format!("synth-{}-{:05}", spec.seed, song_idx),
        key,
        emotion,
        bpm,
        sentences,
    })
}

fn gen_sentence(
    spec: &CorpusSpec,
    song_idx: usize,
    sentence_idx: usize,
    start: u32,
    inventory: &[(String, u8)],
    rng: &mut ChaCha8Rng,
) -> Result<SentenceRecord, SynthError> {
    let targets = &spec.targets;
    let mut last_miss = String::new();
    for _attempt in 0..MAX_ATTEMPTS {
        let num_syllables = rng.gen_range(spec.syllables_per_sentence.0..=spec.syllables_per_sentence.1);
        let Some(num_notes) = pick_note_count(num_syllables, targets.get(AttrId::Align), rng) else {
            last_miss = "no note count satisfies the Align band".into();
            continue;
        };

        let durations = gen_durations(num_notes, targets.get(AttrId::Dm), rng);
        let gaps = gen_gaps(&durations, targets.get(AttrId::Nd), rng);
        let pitches = gen_pitches(
            num_notes,
            targets.get(AttrId::Pm),
            targets.get(AttrId::Pr),
            targets.get(AttrId::Pv),
            rng,
        );

        let mut notes = Vec::with_capacity(num_notes);
        let mut onset = start;
        for i in 0..num_notes {
            notes.push(Note::new(onset, durations[i], pitches[i]));
            onset += durations[i] + if i + 1 < num_notes { gaps[i] } else { 0 };
        }

        let syllables = gen_syllables(num_syllables, num_notes, inventory, rng);
        let words = gen_words(num_syllables, rng);
        let candidate = SentenceRecord {
            structure: rng.gen_range(0..crate::score::NUM_STRUCTURES as u8),
            syllables,
            words,
            notes,
        };

        let attrs = compute_attributes(&candidate).expect("candidate is non-empty");
        let mut misses = Vec::new();
        for attr in AttrId::ALL {
            if let Some((lo, hi)) = targets.get(attr) {
                let v = attrs.get(attr);
                if v < lo || v > hi {
                    misses.push(format!("{}={v:.4} outside [{lo}, {hi}]", attr.name()));
                }
            }
        }
        if misses.is_empty() {
            return Ok(candidate);
        }
        last_miss = misses.join("; ");
    }
    Err(SynthError::RejectionExhausted {
        song: song_idx,
        sentence: sentence_idx,
        attempts: MAX_ATTEMPTS,
        detail: last_miss,
    })
}

/// Picks a note count whose implied Align = syllables/notes sits in the band.
fn pick_note_count(num_syllables: usize, band: Option<(f64, f64)>, rng: &mut ChaCha8Rng) -> Option<usize> {
    let max_notes = num_syllables * MAX_MELISMA;
    match band {
        None => {
            // Mostly one-to-one, otherwise a moderate amount of melisma.
            if rng.gen_bool(0.6) {
                Some(num_syllables)
            } else {
                let a = rng.gen_range(0.55..0.95);
                let n = ((num_syllables as f64 / a).round() as usize).clamp(num_syllables, max_notes);
                Some(n)
            }
        }
        Some((lo, hi)) => {
            let feasible: Vec<usize> = (num_syllables..=max_notes)
                .filter(|&n| {
                    let a = num_syllables as f64 / n as f64;
                    a >= lo && a <= hi
                })
                .collect();
            if feasible.is_empty() {
                None
            } else {
                Some(*choose(rng, &feasible))
            }
        }
    }
}

fn gen_durations(n: usize, band: Option<(f64, f64)>, rng: &mut ChaCha8Rng) -> Vec<u32> {
    let base = match band {
        Some((lo, hi)) => sample_in(rng, lo.max(1.0), hi.min(32.0).max(lo.max(1.0))),
        None => (rng.gen_range(f64::ln(2.0)..f64::ln(8.0))).exp(),
    };
    let cap = MAX_DURATION_TICKS as u32;
    let mut out: Vec<u32> = (0..n)
        .map(|_| {
            let factor = *choose(rng, &[0.5, 1.0, 1.0, 1.0, 2.0]);
            ((base * factor).round() as u32).clamp(1, cap)
        })
        .collect();
    if let Some((lo, hi)) = band {
        // Nudge the realized mean into the band by scaling, then by retouching
        // single notes (integer rounding can leave the mean just outside).
        let target = 0.5 * (lo + hi);
        let mean = out.iter().sum::<u32>() as f64 / n as f64;
        if mean > 0.0 {
            let f = target / mean;
            for d in out.iter_mut() {
                *d = ((*d as f64 * f).round() as u32).clamp(1, cap);
            }
        }
        for _ in 0..(4 * n) {
            let mean = out.iter().sum::<u32>() as f64 / n as f64;
            if mean < lo {
                let i = rng.gen_range(0..n);
                if out[i] < cap {
                    out[i] += 1;
                }
            } else if mean > hi {
                let i = rng.gen_range(0..n);
                if out[i] > 1 {
                    out[i] -= 1;
                }
            } else {
                break;
            }
        }
    }
    out
}

/// Inter-note rests sized so the note density lands near the given band
/// (or a broad default spread when no band is given).
fn gen_gaps(durations: &[u32], band: Option<(f64, f64)>, rng: &mut ChaCha8Rng) -> Vec<u32> {
    let n = durations.len();
    if n < 2 {
        return Vec::new();
    }
    let sum_d: u32 = durations.iter().sum();
    let contiguous_nd = 16.0 * n as f64 / sum_d as f64;
    let target_nd = match band {
        Some((lo, hi)) => sample_in(rng, lo, hi.min(contiguous_nd).max(lo)),
        None => {
            // Bias toward contiguous melodies but leave room for sparse ones.
            let lo = (contiguous_nd * 0.35).max(0.25);
            (rng.gen_range(lo.ln()..=contiguous_nd.ln())).exp()
        }
    };
    let span = (16.0 * n as f64 / target_nd).round() as i64;
    let mut slack = (span - sum_d as i64).max(0) as u32;
    let mut gaps = vec![0u32; n - 1];
    // Spread the slack over a random subset of the inter-note slots.
    while slack > 0 {
        let i = rng.gen_range(0..gaps.len());
        let chunk = slack.min(rng.gen_range(1..=4));
        gaps[i] += chunk;
        slack -= chunk;
    }
    gaps
}

fn gen_pitches(
    n: usize,
    pm: Option<(f64, f64)>,
    pr: Option<(f64, f64)>,
    pv: Option<(f64, f64)>,
    rng: &mut ChaCha8Rng,
) -> Vec<u8> {
    let mean_target = match pm {
        Some((lo, hi)) => sample_in(rng, lo, hi),
        None => rng.gen_range(48.0..84.0),
    };

    // Random-walk contour with per-sentence character: amplitude, a bias
    // toward rising motion, and an arpeggio-vs-stepwise mixture.
    let amp = rng.gen_range(3i32..=12);
    let rise = 0.5 + rng.gen_range(-0.25..0.25);
    let arpeggio = rng.gen::<f64>();
    let mut contour = Vec::with_capacity(n);
    let mut c = 0i32;
    contour.push(c);
    for _ in 1..n {
        let mag = if rng.gen::<f64>() < arpeggio {
            *choose(rng, &[0, 3, 4, 7])
        } else {
            *choose(rng, &[1, 1, 2])
        };
        let step = if rng.gen_bool(rise) { mag } else { -mag };
        c = (c + step).clamp(-amp, amp);
        contour.push(c);
    }

    // Rescale the contour toward an explicit range or variance target.
    if let Some((lo, hi)) = pr {
        let target = sample_in(rng, lo, hi);
        let current = range_of(&contour);
        rescale(&mut contour, current, target);
    } else if let Some((lo, hi)) = pv {
        let target = sample_in(rng, lo.max(0.0), hi).sqrt();
        let current = std_of(&contour);
        rescale(&mut contour, current, 2.0 * target);
    }

    let mean_c = contour.iter().sum::<i32>() as f64 / n as f64;
    let shift = (mean_target - mean_c).round() as i32;
    contour
        .iter()
        .map(|&c| (c + shift).clamp(0, 127) as u8)
        .collect()
}

fn range_of(contour: &[i32]) -> f64 {
    let (lo, hi) = contour
        .iter()
        .fold((i32::MAX, i32::MIN), |(lo, hi), &c| (lo.min(c), hi.max(c)));
    (hi - lo) as f64
}

fn std_of(contour: &[i32]) -> f64 {
    let n = contour.len() as f64;
    let m = contour.iter().sum::<i32>() as f64 / n;
    (contour.iter().map(|&c| (c as f64 - m).powi(2)).sum::<f64>() / n).sqrt() * 2.0
}

/// Linearly rescales the contour so `measure` moves from `current` to `target`.
fn rescale(contour: &mut [i32], current: f64, target: f64) {
    if current <= 0.0 {
        if target > 0.0 {
            // Flat contour cannot be scaled up; alternate two levels instead.
            let half = (target / 2.0).round() as i32;
            for (i, c) in contour.iter_mut().enumerate() {
                *c = if i % 2 == 0 { -half } else { target as i32 - half };
            }
        }
        return;
    }
    let f = target / current;
    for c in contour.iter_mut() {
        *c = (*c as f64 * f).round() as i32;
    }
}

fn gen_syllables(
    num_syllables: usize,
    num_notes: usize,
    inventory: &[(String, u8)],
    rng: &mut ChaCha8Rng,
) -> Vec<Syllable> {
    // Distribute the extra (melisma) notes over random syllables, capped.
    let mut counts = vec![1usize; num_syllables];
    let mut extra = num_notes - num_syllables;
    while extra > 0 {
        let i = rng.gen_range(0..num_syllables);
        if counts[i] < MAX_MELISMA {
            counts[i] += 1;
            extra -= 1;
        }
    }
    let mut next = 0usize;
    counts
        .iter()
        .map(|&count| {
            let (text, tone) = choose(rng, inventory).clone();
            let note_indices = (next..next + count).collect();
            next += count;
            Syllable { text, tone, note_indices }
        })
        .collect()
}

fn gen_words(num_syllables: usize, rng: &mut ChaCha8Rng) -> Vec<WordSpan> {
    let mut words = Vec::new();
    let mut start = 0usize;
    while start < num_syllables {
        let len = if start + 1 < num_syllables && rng.gen_bool(0.45) { 2 } else { 1 };
        words.push(WordSpan {
            start,
            end: start + len - 1,
            pos: rng.gen_range(0..crate::score::NUM_POS_TAGS as u8),
        });
        start += len;
    }
    words
}

fn sample_in(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.gen_range(lo..=hi)
    } else {
        lo
    }
}

fn choose<'a, T>(rng: &mut ChaCha8Rng, xs: &'a [T]) -> &'a T {
    &xs[rng.gen_range(0..xs.len())]
}
