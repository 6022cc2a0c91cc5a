use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use super::types::{validate_song, SongRecord, Violation, TICKS_PER_QUARTER};

/// MIDI ticks per quarter note in exported files.
pub const MIDI_PPQ: u16 = 480;
/// MIDI ticks per internal tick (480 / 16).
pub const MIDI_TICK_SCALE: u32 = MIDI_PPQ as u32 / TICKS_PER_QUARTER;

#[derive(Debug, Error)]
pub enum MidiError {
    #[error("MIDI I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("refusing to export invalid song {song}: {first}")]
    InvalidSong { song: String, first: Violation },
}

/// Exports a song as a standard MIDI file (format 0, one melody track,
/// 4/4 time, tempo from `song.bpm`). Validation runs before any I/O.
pub fn export_midi(song: &SongRecord, path: impl AsRef<Path>) -> Result<(), MidiError> {
    let bytes = write_midi(song)?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}

/// Renders the SMF byte stream for a song.
pub fn write_midi(song: &SongRecord) -> Result<Vec<u8>, MidiError> {
    let violations = validate_song(song);
    if let Some(first) = violations.into_iter().next() {
        return Err(MidiError::InvalidSong { song: song.id.clone(), first });
    }

    // (midi tick, off-before-on order key, event bytes)
    let mut events: Vec<(u32, u8, [u8; 3])> = Vec::new();
    for note in song.all_notes() {
        let on = note.onset * MIDI_TICK_SCALE;
        let off = note.offset() * MIDI_TICK_SCALE;
        events.push((on, 1, [0x90, note.pitch, 80]));
        events.push((off, 0, [0x80, note.pitch, 0]));
    }
    events.sort_by_key(|&(tick, order, _)| (tick, order));

    let mut track = Vec::new();
    // Tempo: microseconds per quarter note.
    let uspq = (60_000_000.0 / song.bpm).round() as u32;
    write_vlq(&mut track, 0);
    track.extend_from_slice(&[0xFF, 0x51, 0x03]);
    track.extend_from_slice(&uspq.to_be_bytes()[1..]);
    // Time signature 4/4, 24 MIDI clocks per metronome click, 8 32nds per quarter.
    write_vlq(&mut track, 0);
    track.extend_from_slice(&[0xFF, 0x58, 0x04, 0x04, 0x02, 0x18, 0x08]);

    let mut cursor = 0u32;
    for (tick, _, ev) in events {
        write_vlq(&mut track, tick - cursor);
        track.extend_from_slice(&ev);
        cursor = tick;
    }
    write_vlq(&mut track, 0);
    track.extend_from_slice(&[0xFF, 0x2F, 0x00]); // end of track

    let mut out = Vec::with_capacity(track.len() + 22);
    out.extend_from_slice(b"MThd");
    out.extend_from_slice(&6u32.to_be_bytes());
    out.extend_from_slice(&0u16.to_be_bytes()); // format 0
    out.extend_from_slice(&1u16.to_be_bytes()); // one track
    out.extend_from_slice(&MIDI_PPQ.to_be_bytes());
    out.extend_from_slice(b"MTrk");
    out.extend_from_slice(&(track.len() as u32).to_be_bytes());
    out.extend_from_slice(&track);
    Ok(out)
}

fn write_vlq(out: &mut Vec<u8>, mut value: u32) {
    let mut stack = [0u8; 5];
    let mut n = 0;
    loop {
        stack[n] = (value & 0x7F) as u8;
        value >>= 7;
        n += 1;
        if value == 0 {
            break;
        }
    }
    for i in (0..n).rev() {
        let mut byte = stack[i];
        if i != 0 {
            byte |= 0x80;
        }
        out.push(byte);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::score::{Note, SentenceRecord, Syllable, WordSpan};

    fn one_note_song() -> SongRecord {
        SongRecord {
            id: "m0".into(),
            key: 0,
            emotion: 0,
            bpm: 120.0,
            sentences: vec![SentenceRecord {
                structure: 0,
                syllables: vec![Syllable { text: "天".into(), tone: 0, note_indices: vec![0] }],
                words: vec![WordSpan { start: 0, end: 0, pos: 3 }],
                notes: vec![Note::new(0, 16, 60)],
            }],
        }
    }

    #[test]
    fn header_and_tempo_are_correct() {
        let bytes = write_midi(&one_note_song()).unwrap();
        assert_eq!(&bytes[..4], b"MThd");
        assert_eq!(u16::from_be_bytes([bytes[8], bytes[9]]), 0); // format 0
        assert_eq!(u16::from_be_bytes([bytes[10], bytes[11]]), 1);
        assert_eq!(u16::from_be_bytes([bytes[12], bytes[13]]), MIDI_PPQ);
        // 120 bpm -> 500000 us per quarter = 0x07A120
        let pos = bytes.windows(3).position(|w| w == [0xFF, 0x51, 0x03]).unwrap();
        assert_eq!(&bytes[pos + 3..pos + 6], &[0x07, 0xA1, 0x20]);
    }

    #[test]
    fn single_note_lasts_one_beat() {
        let bytes = write_midi(&one_note_song()).unwrap();
        let on = bytes.windows(3).position(|w| w == [0x90, 60, 80]).unwrap();
        // Delta time before the note-off equals one quarter note.
        assert_eq!(&bytes[on + 3..on + 5], &[0x83, 0x60]); // VLQ 480
        assert_eq!(&bytes[on + 5..on + 8], &[0x80, 60, 0]);
    }

    #[test]
    fn invalid_song_is_rejected_before_write() {
        let mut song = one_note_song();
        song.sentences.clear();
        assert!(matches!(write_midi(&song), Err(MidiError::InvalidSong { .. })));
    }

    #[test]
    fn vlq_encoding_matches_known_values() {
        let mut buf = Vec::new();
        for (v, want) in [
            (0u32, vec![0x00u8]),
            (0x7F, vec![0x7F]),
            (0x80, vec![0x81, 0x00]),
            (0x3FFF, vec![0xFF, 0x7F]),
            (0x4000, vec![0x81, 0x80, 0x00]),
        ] {
            buf.clear();
            write_vlq(&mut buf, v);
            assert_eq!(buf, want, "vlq({v})");
        }
    }
}
