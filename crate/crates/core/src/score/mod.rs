//! Canonical in-memory song model, corpus ingestion, validation, synthetic
//! corpus generation, and MIDI export.
//!
//! All time values are in ticks with 16 ticks per quarter note, i.e. 64 ticks
//! per 4/4 bar; the shortest representable note is a 64th (1 tick). Songs are
//! immutable after construction and validated explicitly via
//! [`validate_song`].

mod corpus;
mod midi;
mod synth;
mod types;

pub use corpus::{load_corpus, load_corpus_reader, write_corpus, write_corpus_writer, CorpusError};
pub use midi::{export_midi, write_midi, MidiError, MIDI_PPQ, MIDI_TICK_SCALE};
pub use synth::{gen_synthetic, AttributeTargets, CorpusSpec, SynthError};
pub use types::{
    validate_song, Note, SentenceRecord, SongRecord, Syllable, Violation, WordSpan,
    MAX_DURATION_TICKS, NUM_EMOTIONS, NUM_KEYS, NUM_POS_TAGS, NUM_STRUCTURES, NUM_TONES,
    TICKS_PER_BAR, TICKS_PER_QUARTER,
};
