//! Syllable-text vocabulary for the semantic encoder.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::score::SongRecord;

/// Id of the start-of-sentence slot the encoder reads its summary from.
pub const LYRIC_SEQ: usize = 0;
/// Id assigned to syllables unseen at fit time.
pub const LYRIC_UNK: usize = 1;

/// Maps syllable text to dense ids. Ids are stable: reserved slots first,
/// then corpus syllables in sorted order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct LyricVocab {
    syms: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl From<Vec<String>> for LyricVocab {
    fn from(syms: Vec<String>) -> LyricVocab {
        let index = syms.iter().enumerate().skip(2).map(|(i, s)| (s.clone(), i)).collect();
        LyricVocab { syms, index }
    }
}

impl From<LyricVocab> for Vec<String> {
    fn from(v: LyricVocab) -> Vec<String> {
        v.syms
    }
}

impl LyricVocab {
    pub fn from_corpus(corpus: &[SongRecord]) -> LyricVocab {
        let unique: BTreeSet<&str> = corpus
            .iter()
            .flat_map(|song| &song.sentences)
            .flat_map(|s| &s.syllables)
            .map(|s| s.text.as_str())
            .collect();
        let mut syms = vec!["<seq>".to_string(), "<unk>".to_string()];
        syms.extend(unique.into_iter().map(str::to_string));
        LyricVocab::from(syms)
    }

    pub fn id(&self, syllable: &str) -> usize {
        self.index.get(syllable).copied().unwrap_or(LYRIC_UNK)
    }

    pub fn ids<'a>(&self, syllables: impl IntoIterator<Item = &'a str>) -> Vec<usize> {
        syllables.into_iter().map(|s| self.id(s)).collect()
    }

    /// Total table size including the two reserved slots.
    pub fn len(&self) -> usize {
        self.syms.len()
    }

    pub fn is_empty(&self) -> bool {
        false // reserved slots are always present
    }
}
