use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use super::types::{validate_song, SongRecord, Violation};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("corpus I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: parse error: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}, song {song}: {}", format_violations(.violations))]
    Invalid { line: usize, song: String, violations: Vec<Violation> },
}

fn format_violations(vs: &[Violation]) -> String {
    vs.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}

/// Loads a JSONL corpus (one song object per line) and validates every record.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<SongRecord>, CorpusError> {
    load_corpus_reader(BufReader::new(File::open(path)?))
}

pub fn load_corpus_reader<R: BufRead>(reader: R) -> Result<Vec<SongRecord>, CorpusError> {
    let mut songs = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let song: SongRecord = serde_json::from_str(&line)
            .map_err(|e| CorpusError::Parse { line: lineno, message: e.to_string() })?;
        let violations = validate_song(&song);
        if !violations.is_empty() {
            return Err(CorpusError::Invalid { line: lineno, song: song.id, violations });
        }
        songs.push(song);
    }
    Ok(songs)
}

/// Writes songs as JSONL. The field order is fixed, so the same records always
/// produce byte-identical files.
pub fn write_corpus(songs: &[SongRecord], path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_corpus_writer(songs, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn write_corpus_writer<W: Write>(songs: &[SongRecord], w: &mut W) -> Result<(), CorpusError> {
    for song in songs {
        let line = serde_json::to_string(song)
            .map_err(|e| CorpusError::Parse { line: 0, message: e.to_string() })?;
        writeln!(w, "{line}")?;
    }
    Ok(())
}
