use std::fmt;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Ticks per quarter note. Positions and durations share this grid.
pub const TICKS_PER_QUARTER: u32 = 16;
/// Ticks per 4/4 bar.
pub const TICKS_PER_BAR: u32 = 4 * TICKS_PER_QUARTER;
/// Longest admissible note: two bars. Longer notes are rejected at ingestion.
pub const MAX_DURATION_TICKS: u32 = 2 * TICKS_PER_BAR;
/// 12 major + 12 minor keys.
pub const NUM_KEYS: u8 = 24;
/// Neutral / Positive / Negative.
pub const NUM_EMOTIONS: u8 = 3;
/// Verse / Chorus / Insertion / Bridge / Outro.
pub const NUM_STRUCTURES: u8 = 5;
/// Four main tones at classes 0-3 plus the light (neutral) tone at class 4.
pub const NUM_TONES: u8 = 5;
/// Part-of-speech tag inventory size.
pub const NUM_POS_TAGS: u8 = 56;

/// A single melody note on the shared tick grid.
///
/// Serialized in corpus files as the triple `[onset, duration, pitch]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Note {
    /// Absolute onset in ticks from the start of the song.
    pub onset: u32,
    /// Duration in ticks, at least 1.
    pub duration: u32,
    /// MIDI note number, 0-127.
    pub pitch: u8,
}

impl Note {
    pub fn new(onset: u32, duration: u32, pitch: u8) -> Self {
        Note { onset, duration, pitch }
    }

    /// First tick after the note stops sounding.
    pub fn offset(&self) -> u32 {
        self.onset + self.duration
    }
}

impl Serialize for Note {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        (self.onset, self.duration, self.pitch).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Note {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let (onset, duration, pitch): (u32, u32, u32) = Deserialize::deserialize(deserializer)?;
        if pitch > 127 {
            return Err(D::Error::custom(format!("note pitch {pitch} out of MIDI range 0-127")));
        }
        Ok(Note { onset, duration, pitch: pitch as u8 })
    }
}

/// One sung syllable and the notes it is aligned to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Syllable {
    /// Syllable text, typically one character.
    pub text: String,
    /// Tone class 0-4.
    pub tone: u8,
    /// Indices into the owning sentence's note list; non-empty, contiguous,
    /// strictly increasing.
    #[serde(rename = "notes")]
    pub note_indices: Vec<usize>,
}

/// A word as a span of syllables carrying one part-of-speech tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordSpan {
    /// First syllable index of the word (inclusive).
    pub start: usize,
    /// Last syllable index of the word (inclusive).
    pub end: usize,
    /// Part-of-speech tag, 0-55.
    pub pos: u8,
}

/// One lyric sentence with its aligned melody fragment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceRecord {
    /// Structure section tag 0-4.
    pub structure: u8,
    pub syllables: Vec<Syllable>,
    /// Word spans partitioning the syllables.
    pub words: Vec<WordSpan>,
    /// Notes sorted by onset, non-overlapping.
    pub notes: Vec<Note>,
}

impl SentenceRecord {
    pub fn num_syllables(&self) -> usize {
        self.syllables.len()
    }

    pub fn num_notes(&self) -> usize {
        self.notes.len()
    }
}

/// A full song: aligned lyric/melody sentences plus human-labeled tags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SongRecord {
    pub id: String,
    /// Key tag, 0-23 (12 major then 12 minor).
    pub key: u8,
    /// Emotion tag, 0-2.
    pub emotion: u8,
    /// Beats per minute. Stored for export; the token grid does not use it.
    pub bpm: f64,
    pub sentences: Vec<SentenceRecord>,
}

impl SongRecord {
    pub fn num_sentences(&self) -> usize {
        self.sentences.len()
    }

    pub fn num_syllables(&self) -> usize {
        self.sentences.iter().map(|s| s.num_syllables()).sum()
    }

    pub fn num_notes(&self) -> usize {
        self.sentences.iter().map(|s| s.num_notes()).sum()
    }

    /// All notes in song order.
    pub fn all_notes(&self) -> impl Iterator<Item = &Note> {
        self.sentences.iter().flat_map(|s| s.notes.iter())
    }
}

/// A failed invariant, naming the offending type, field, and location.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub type_name: &'static str,
    pub field: &'static str,
    /// Sentence index within the song, when applicable.
    pub sentence: Option<usize>,
    /// Element index within the sentence (note, syllable, or word), when applicable.
    pub index: Option<usize>,
    pub detail: String,
}

impl Violation {
    fn song(field: &'static str, detail: String) -> Self {
        Violation { type_name: "SongRecord", field, sentence: None, index: None, detail }
    }

    fn at(
        type_name: &'static str,
        field: &'static str,
        sentence: usize,
        index: Option<usize>,
        detail: String,
    ) -> Self {
        Violation { type_name, field, sentence: Some(sentence), index, detail }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.type_name, self.field)?;
        if let Some(s) = self.sentence {
            write!(f, " (sentence {s}")?;
            if let Some(i) = self.index {
                write!(f, ", element {i}")?;
            }
            write!(f, ")")?;
        }
        write!(f, ": {}", self.detail)
    }
}

/// Checks every type invariant and returns the list of violations; an empty
/// list means the song is well-formed.
pub fn validate_song(song: &SongRecord) -> Vec<Violation> {
    let mut out = Vec::new();

    if song.sentences.is_empty() {
        out.push(Violation::song("sentences", "song has no sentences".into()));
    }
    if song.key >= NUM_KEYS {
        out.push(Violation::song("key", format!("key {} out of range 0-{}", song.key, NUM_KEYS - 1)));
    }
    if song.emotion >= NUM_EMOTIONS {
        out.push(Violation::song(
            "emotion",
            format!("emotion {} out of range 0-{}", song.emotion, NUM_EMOTIONS - 1),
        ));
    }
    if !(song.bpm.is_finite() && song.bpm > 0.0) {
        out.push(Violation::song("bpm", format!("bpm {} is not a positive number", song.bpm)));
    }

    let mut prev_sentence_end: Option<u32> = None;
    for (si, sent) in song.sentences.iter().enumerate() {
        validate_sentence(sent, si, &mut out);
        if let (Some(end), Some(first)) = (prev_sentence_end, sent.notes.first()) {
            if first.onset < end {
                out.push(Violation::at(
                    "SongRecord",
                    "sentences",
                    si,
                    None,
                    format!(
                        "overlap: sentence starts at tick {} before previous sentence ends at {}",
                        first.onset, end
                    ),
                ));
            }
        }
        if let Some(last) = sent.notes.last() {
            prev_sentence_end = Some(last.offset());
        }
    }

    out
}

fn validate_sentence(sent: &SentenceRecord, si: usize, out: &mut Vec<Violation>) {
    if sent.structure >= NUM_STRUCTURES {
        out.push(Violation::at(
            "SentenceRecord",
            "structure",
            si,
            None,
            format!("structure tag {} out of range 0-{}", sent.structure, NUM_STRUCTURES - 1),
        ));
    }
    if sent.syllables.is_empty() {
        out.push(Violation::at("SentenceRecord", "syllables", si, None, "sentence has no syllables".into()));
    }
    if sent.notes.is_empty() {
        out.push(Violation::at("SentenceRecord", "notes", si, None, "sentence has no notes".into()));
    }
    if sent.num_notes() < sent.num_syllables() {
        out.push(Violation::at(
            "SentenceRecord",
            "notes",
            si,
            None,
            format!(
                "alignment deficit: {} notes for {} syllables (one-to-one or one-to-many only)",
                sent.num_notes(),
                sent.num_syllables()
            ),
        ));
    }

    for (ni, note) in sent.notes.iter().enumerate() {
        if note.duration == 0 {
            out.push(Violation::at("Note", "duration", si, Some(ni), "duration must be >= 1 tick".into()));
        }
        if note.duration > MAX_DURATION_TICKS {
            out.push(Violation::at(
                "Note",
                "duration",
                si,
                Some(ni),
                format!("duration {} exceeds the {MAX_DURATION_TICKS}-tick cap", note.duration),
            ));
        }
        if note.pitch > 127 {
            out.push(Violation::at("Note", "pitch", si, Some(ni), format!("pitch {} above 127", note.pitch)));
        }
        if ni > 0 {
            let prev = &sent.notes[ni - 1];
            if note.onset < prev.offset() {
                out.push(Violation::at(
                    "Note",
                    "onset",
                    si,
                    Some(ni),
                    format!(
                        "overlap: note at tick {} starts before previous note ends at {}",
                        note.onset,
                        prev.offset()
                    ),
                ));
            }
        }
    }

    for (syi, syl) in sent.syllables.iter().enumerate() {
        if syl.tone >= NUM_TONES {
            out.push(Violation::at(
                "Syllable",
                "tone",
                si,
                Some(syi),
                format!("tone class {} out of range 0-{}", syl.tone, NUM_TONES - 1),
            ));
        }
        if syl.note_indices.is_empty() {
            out.push(Violation::at("Syllable", "noteIndices", si, Some(syi), "empty alignment".into()));
        }
        for w in syl.note_indices.windows(2) {
            if w[1] != w[0] + 1 {
                out.push(Violation::at(
                    "Syllable",
                    "noteIndices",
                    si,
                    Some(syi),
                    format!("indices {:?} are not contiguous and strictly increasing", syl.note_indices),
                ));
                break;
            }
        }
        if let Some(&last) = syl.note_indices.last() {
            if last >= sent.notes.len() {
                out.push(Violation::at(
                    "Syllable",
                    "noteIndices",
                    si,
                    Some(syi),
                    format!("index {} out of range for {} notes", last, sent.notes.len()),
                ));
            }
        }
    }

    // Strict alignment: the syllables' index lists, concatenated in order,
    // must be exactly 0..numNotes.
    let flat: Vec<usize> = sent.syllables.iter().flat_map(|s| s.note_indices.iter().copied()).collect();
    let expected: Vec<usize> = (0..sent.notes.len()).collect();
    if !sent.syllables.is_empty() && flat != expected {
        out.push(Violation::at(
            "SentenceRecord",
            "syllables",
            si,
            None,
            format!("alignment does not partition notes: got {:?}, want 0..{}", flat, sent.notes.len()),
        ));
    }

    let mut cursor = 0usize;
    for (wi, word) in sent.words.iter().enumerate() {
        if word.pos >= NUM_POS_TAGS {
            out.push(Violation::at(
                "WordSpan",
                "posTag",
                si,
                Some(wi),
                format!("POS tag {} out of range 0-{}", word.pos, NUM_POS_TAGS - 1),
            ));
        }
        if word.start != cursor || word.end < word.start {
            out.push(Violation::at(
                "WordSpan",
                "span",
                si,
                Some(wi),
                format!("span {}..={} does not continue partition at syllable {}", word.start, word.end, cursor),
            ));
        }
        cursor = word.end + 1;
    }
    if cursor != sent.syllables.len() {
        out.push(Violation::at(
            "SentenceRecord",
            "words",
            si,
            None,
            format!("word spans cover {} of {} syllables", cursor, sent.syllables.len()),
        ));
    }
}
