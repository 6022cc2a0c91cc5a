//! Syllable-level lyric controls: tone classes and word-level part-of-speech
//! tags expanded to the syllable level.
//!
//! Tone classes 0–3 are the four main Mandarin tones; class 4 is the light
//! (neutral) tone. POS tagging itself happens upstream — the corpus carries
//! pre-computed word spans — so this module only validates and replicates.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use thiserror::Error;

use crate::score::{SentenceRecord, WordSpan, NUM_POS_TAGS, NUM_TONES};

/// Tone class assigned in non-tonal mode and to the Mandarin light tone.
pub const NEUTRAL_TONE: u8 = 4;

/// Map from syllable text to tone class 0–4.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ToneTable {
    map: BTreeMap<String, u8>,
}

#[derive(Debug, Error)]
pub enum LyricError {
    #[error("tone table parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("tone table I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("unknown syllables with no corpus-supplied tone: {}", .0.join(" "))]
    UnknownSyllables(Vec<String>),
    #[error("word spans do not partition the {num_syllables} syllables: {detail}")]
    BadWordSpans { num_syllables: usize, detail: String },
}

impl ToneTable {
    /// The small table bundled with the crate; covers the synthetic corpus
    /// inventory. Real corpora should supply a fuller table.
    pub fn bundled() -> &'static ToneTable {
        static TABLE: OnceLock<ToneTable> = OnceLock::new();
        TABLE.get_or_init(|| {
            ToneTable::from_text(include_str!("../data/tones.tsv"))
                .expect("bundled tone table is well-formed")
        })
    }

    /// Parses the `syllable<TAB>class` text format, one pair per line.
    pub fn from_text(text: &str) -> Result<ToneTable, LyricError> {
        let mut map = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.is_empty() {
                continue;
            }
            let (syllable, class) = line.split_once('\t').ok_or_else(|| LyricError::Parse {
                line: i + 1,
                message: "expected `syllable<TAB>class`".into(),
            })?;
            let class: u8 = class.trim().parse().map_err(|e| LyricError::Parse {
                line: i + 1,
                message: format!("bad class: {e}"),
            })?;
            if class >= NUM_TONES {
                return Err(LyricError::Parse {
                    line: i + 1,
                    message: format!("tone class {class} out of range 0-4"),
                });
            }
            if map.insert(syllable.to_string(), class).is_some() {
                return Err(LyricError::Parse {
                    line: i + 1,
                    message: format!("duplicate entry for {syllable}"),
                });
            }
        }
        Ok(ToneTable { map })
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<ToneTable, LyricError> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    pub fn get(&self, syllable: &str) -> Option<u8> {
        self.map.get(syllable).copied()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, u8)> {
        self.map.iter().map(|(s, &c)| (s.as_str(), c))
    }
}

/// A corpus tone that disagrees with the table; reported, not fatal, since
/// the corpus-supplied tone takes precedence (polyphonic characters).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToneMismatch {
    pub index: usize,
    pub text: String,
    pub corpus: u8,
    pub table: u8,
}

/// Tone classes per syllable plus any corpus/table disagreements found.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToneAnnotation {
    pub classes: Vec<u8>,
    pub mismatches: Vec<ToneMismatch>,
}

/// Resolves one tone class per syllable.
///
/// A corpus-supplied class passes through unchanged (checked against the
/// table when both exist); otherwise the table's class is used. Syllables
/// with neither are collected into one [`LyricError::UnknownSyllables`].
pub fn annotate_tones<'a, I>(syllables: I, table: &ToneTable) -> Result<ToneAnnotation, LyricError>
where
    I: IntoIterator<Item = (&'a str, Option<u8>)>,
{
    let mut classes = Vec::new();
    let mut mismatches = Vec::new();
    let mut unknown = Vec::new();
    for (index, (text, corpus)) in syllables.into_iter().enumerate() {
        let table_class = table.get(text);
        match (corpus, table_class) {
            (Some(c), Some(t)) => {
                if c != t {
                    mismatches.push(ToneMismatch { index, text: text.to_string(), corpus: c, table: t });
                }
                classes.push(c);
            }
            (Some(c), None) => classes.push(c),
            (None, Some(t)) => classes.push(t),
            (None, None) => unknown.push(text.to_string()),
        }
    }
    if !unknown.is_empty() {
        return Err(LyricError::UnknownSyllables(unknown));
    }
    Ok(ToneAnnotation { classes, mismatches })
}

/// The all-neutral tone vector used for non-tonal-language input.
pub fn neutral_tones(num_syllables: usize) -> Vec<u8> {
    vec![NEUTRAL_TONE; num_syllables]
}

/// Replicates word-level POS tags down to one tag per syllable.
///
/// The spans must partition `0..num_syllables` in order; gaps, overlaps, and
/// out-of-range tags are errors.
pub fn expand_pos_to_syllables(words: &[WordSpan], num_syllables: usize) -> Result<Vec<u8>, LyricError> {
    let fail = |detail: String| LyricError::BadWordSpans { num_syllables, detail };
    let mut out = Vec::with_capacity(num_syllables);
    let mut next = 0usize;
    for (w, span) in words.iter().enumerate() {
        if span.start != next {
            return Err(fail(format!(
                "word {w} starts at syllable {} but {next} expected (gap or overlap)",
                span.start
            )));
        }
        if span.end < span.start || span.end >= num_syllables {
            return Err(fail(format!("word {w} range {}..={} out of bounds", span.start, span.end)));
        }
        if span.pos >= NUM_POS_TAGS {
            return Err(fail(format!("word {w} POS tag {} out of range 0-55", span.pos)));
        }
        for _ in span.start..=span.end {
            out.push(span.pos);
        }
        next = span.end + 1;
    }
    if next != num_syllables {
        return Err(fail(format!("spans cover only {next} of {num_syllables} syllables")));
    }
    Ok(out)
}

/// Per-syllable control classes: tone plus the covering word's POS tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyllableControls {
    pub tone: u8,
    pub pos: u8,
}

/// Convenience: resolves tones and POS tags for one corpus sentence.
pub fn syllable_controls(
    sentence: &SentenceRecord,
    table: &ToneTable,
) -> Result<Vec<SyllableControls>, LyricError> {
    let tones = annotate_tones(
        sentence.syllables.iter().map(|s| (s.text.as_str(), Some(s.tone))),
        table,
    )?;
    let pos = expand_pos_to_syllables(&sentence.words, sentence.syllables.len())?;
    Ok(tones
        .classes
        .into_iter()
        .zip(pos)
        .map(|(tone, pos)| SyllableControls { tone, pos })
        .collect())
}
