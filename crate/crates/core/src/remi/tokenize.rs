//! Conversion between song records and token streams.

use crate::score::{
    validate_song, Note, SentenceRecord, SongRecord, Syllable, WordSpan, TICKS_PER_BAR,
};

use super::grammar::GrammarState;
use super::token::Token;
use super::RemiError;

/// Lyric side of one sentence, carried alongside a melody token stream.
#[derive(Debug, Clone, PartialEq)]
pub struct SentenceLyric {
    pub structure: u8,
    /// `(text, tone class)` per syllable.
    pub syllables: Vec<(String, u8)>,
    pub words: Vec<WordSpan>,
}

/// Lyric side of a whole song; what detokenization needs beyond the tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct LyricSheet {
    pub sentences: Vec<SentenceLyric>,
}

impl LyricSheet {
    pub fn of_song(song: &SongRecord) -> LyricSheet {
        LyricSheet {
            sentences: song
                .sentences
                .iter()
                .map(|s| SentenceLyric {
                    structure: s.structure,
                    syllables: s.syllables.iter().map(|y| (y.text.clone(), y.tone)).collect(),
                    words: s.words.clone(),
                })
                .collect(),
        }
    }

    pub fn syllable_counts(&self) -> Vec<usize> {
        self.sentences.iter().map(|s| s.syllables.len()).collect()
    }
}

/// Song-level metadata reattached on detokenization.
#[derive(Debug, Clone, PartialEq)]
pub struct SongTags {
    pub id: String,
    pub key: u8,
    pub emotion: u8,
    pub bpm: f64,
}

impl SongTags {
    pub fn of_song(song: &SongRecord) -> SongTags {
        SongTags { id: song.id.clone(), key: song.key, emotion: song.emotion, bpm: song.bpm }
    }
}

/// Emits the note groups of one syllable: lazily-advanced BAR tokens, then
/// `POS PITCH DUR` per note. `shift` rebases onsets (0 for whole songs).
fn emit_note_groups(tokens: &mut Vec<Token>, notes: &[Note], shift: u32, bars_emitted: &mut u64) {
    for note in notes {
        let onset = (note.onset - shift) as u64;
        while onset >= *bars_emitted * TICKS_PER_BAR as u64 {
            tokens.push(Token::Bar);
            *bars_emitted += 1;
        }
        tokens.push(Token::Pos((onset % TICKS_PER_BAR as u64) as u8));
        tokens.push(Token::Pitch(note.pitch));
        tokens.push(Token::Dur(note.duration as u8));
    }
}

/// Tokenizes a whole valid song: `SEQ`, then per sentence each syllable as
/// `SYL` + its note groups, `SEP` after every sentence, `EOS` at the end.
pub fn tokenize_song(song: &SongRecord) -> Result<Vec<Token>, RemiError> {
    let violations = validate_song(song);
    if let Some(first) = violations.first() {
        return Err(RemiError::InvalidSong { song: song.id.clone(), first: first.to_string() });
    }
    let mut tokens = vec![Token::Seq];
    let mut bars_emitted = 0u64;
    for sentence in &song.sentences {
        for syllable in &sentence.syllables {
            tokens.push(Token::Syl);
            let first = syllable.note_indices[0];
            let last = *syllable.note_indices.last().unwrap();
            emit_note_groups(&mut tokens, &sentence.notes[first..=last], 0, &mut bars_emitted);
        }
        tokens.push(Token::Sep);
    }
    tokens.push(Token::Eos);
    Ok(tokens)
}

/// Tokenizes one sentence as a self-contained stream (`SEQ … SEP EOS`),
/// rebased so its first note falls in the first bar (bar-aligned shift, so
/// intra-bar positions are preserved).
pub fn tokenize_sentence(sentence: &SentenceRecord) -> Result<Vec<Token>, RemiError> {
    let song = SongRecord {
        id: "sentence".to_string(),
        key: 0,
        emotion: 0,
        bpm: 120.0,
        sentences: vec![rebase_sentence(sentence)],
    };
    tokenize_song(&song)
}

fn rebase_sentence(sentence: &SentenceRecord) -> SentenceRecord {
    let shift = sentence
        .notes
        .first()
        .map(|n| (n.onset / TICKS_PER_BAR) * TICKS_PER_BAR)
        .unwrap_or(0);
    SentenceRecord {
        structure: sentence.structure,
        syllables: sentence.syllables.clone(),
        words: sentence.words.clone(),
        notes: sentence
            .notes
            .iter()
            .map(|n| Note::new(n.onset - shift, n.duration, n.pitch))
            .collect(),
    }
}

/// Inverse of [`tokenize_song`]: rebuilds the song from a complete stream
/// plus the lyric sheet and tags. `detokenize_song(tokenize_song(s), …) == s`
/// for every valid `s`.
pub fn detokenize_song(
    tokens: &[Token],
    lyrics: &LyricSheet,
    tags: &SongTags,
) -> Result<SongRecord, RemiError> {
    if lyrics.sentences.is_empty() {
        return Err(RemiError::EmptyLyrics);
    }
    let counts = lyrics.syllable_counts();
    let mut state = GrammarState::new(&counts)?;

    let mut sentences: Vec<SentenceRecord> = Vec::with_capacity(lyrics.sentences.len());
    let mut notes: Vec<Note> = Vec::new();
    let mut syllables: Vec<Syllable> = Vec::new();
    let mut note_indices: Vec<usize> = Vec::new();
    let mut pending_pitch = 0u8;

    for (i, &token) in tokens.iter().enumerate() {
        state.accept(token, i)?;
        match token {
            Token::Syl => {
                close_syllable(&mut note_indices, &mut syllables, lyrics, sentences.len(), i)?;
            }
            Token::Pitch(m) => pending_pitch = m,
            Token::Dur(d) => {
                // The grammar advanced its write head to onset + dur.
                let onset = state.write_head() - d as u64;
                notes.push(Note::new(onset as u32, d as u32, pending_pitch));
                note_indices.push(notes.len() - 1);
            }
            Token::Sep => {
                close_syllable(&mut note_indices, &mut syllables, lyrics, sentences.len(), i)?;
                let sent_idx = sentences.len();
                let lyric = &lyrics.sentences[sent_idx];
                if syllables.len() != lyric.syllables.len() {
                    return Err(RemiError::CountMismatch(format!(
                        "sentence {sent_idx}: stream has {} syllables, lyrics have {}",
                        syllables.len(),
                        lyric.syllables.len()
                    )));
                }
                sentences.push(SentenceRecord {
                    structure: lyric.structure,
                    syllables: std::mem::take(&mut syllables),
                    words: lyric.words.clone(),
                    notes: std::mem::take(&mut notes),
                });
            }
            _ => {}
        }
    }
    if !state.is_complete() {
        return Err(RemiError::Truncated { expected: state.legal_next_kinds().names() });
    }
    if sentences.len() != lyrics.sentences.len() {
        return Err(RemiError::CountMismatch(format!(
            "stream has {} sentences, lyrics have {}",
            sentences.len(),
            lyrics.sentences.len()
        )));
    }

    Ok(SongRecord {
        id: tags.id.clone(),
        key: tags.key,
        emotion: tags.emotion,
        bpm: tags.bpm,
        sentences,
    })
}

/// Seals the currently open syllable with the note indices gathered since
/// the last SYL. The grammar guarantees an open syllable has gathered at
/// least one note, so an empty gather means no syllable is open (start of a
/// sentence) and there is nothing to seal.
fn close_syllable(
    note_indices: &mut Vec<usize>,
    syllables: &mut Vec<Syllable>,
    lyrics: &LyricSheet,
    sent_idx: usize,
    index: usize,
) -> Result<(), RemiError> {
    if note_indices.is_empty() {
        return Ok(());
    }
    let syl_idx = syllables.len();
    let lyric = lyrics
        .sentences
        .get(sent_idx)
        .and_then(|s| s.syllables.get(syl_idx))
        .ok_or_else(|| {
            RemiError::CountMismatch(format!(
                "token {index}: more syllables in stream than in lyrics (sentence {sent_idx})"
            ))
        })?;
    syllables.push(Syllable {
        text: lyric.0.clone(),
        tone: lyric.1,
        note_indices: std::mem::take(note_indices),
    });
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::super::token::{format_stream, parse_stream};
    use super::*;
    use crate::score::gen_synthetic;
    use crate::score::CorpusSpec;

    fn minimal_song() -> SongRecord {
        SongRecord {
            id: "m".into(),
            key: 0,
            emotion: 0,
            bpm: 120.0,
            sentences: vec![SentenceRecord {
                structure: 0,
                syllables: vec![Syllable { text: "天".into(), tone: 0, note_indices: vec![0] }],
                words: vec![WordSpan { start: 0, end: 0, pos: 0 }],
                notes: vec![Note::new(0, 4, 60)],
            }],
        }
    }

    #[test]
    fn minimal_song_tokenizes_to_the_documented_stream() {
        let tokens = tokenize_song(&minimal_song()).unwrap();
        assert_eq!(format_stream(&tokens), "SEQ SYL BAR POS_0 PITCH_60 DUR_4 SEP EOS");
    }

    #[test]
    fn one_to_many_syllable_has_one_syl_two_triples() {
        let mut song = minimal_song();
        song.sentences[0].notes = vec![Note::new(0, 4, 60), Note::new(4, 4, 62)];
        song.sentences[0].syllables[0].note_indices = vec![0, 1];
        let tokens = tokenize_song(&song).unwrap();
        assert_eq!(
            format_stream(&tokens),
            "SEQ SYL BAR POS_0 PITCH_60 DUR_4 POS_4 PITCH_62 DUR_4 SEP EOS"
        );
        let syl = tokens.iter().filter(|t| **t == Token::Syl).count();
        let pitch = tokens.iter().filter(|t| matches!(t, Token::Pitch(_))).count();
        assert_eq!((syl, pitch), (1, 2));
    }

    #[test]
    fn second_bar_note_gets_a_second_bar_token() {
        let mut song = minimal_song();
        song.sentences[0].notes = vec![Note::new(0, 4, 60), Note::new(64, 4, 62)];
        song.sentences[0].syllables[0].note_indices = vec![0, 1];
        let tokens = tokenize_song(&song).unwrap();
        assert_eq!(
            format_stream(&tokens),
            "SEQ SYL BAR POS_0 PITCH_60 DUR_4 BAR POS_0 PITCH_62 DUR_4 SEP EOS"
        );
    }

    #[test]
    fn empty_gap_bars_emit_consecutive_bar_tokens() {
        let mut song = minimal_song();
        song.sentences[0].notes = vec![Note::new(0, 4, 60), Note::new(130, 4, 62)];
        song.sentences[0].syllables[0].note_indices = vec![0, 1];
        let tokens = tokenize_song(&song).unwrap();
        assert_eq!(
            format_stream(&tokens),
            "SEQ SYL BAR POS_0 PITCH_60 DUR_4 BAR BAR POS_2 PITCH_62 DUR_4 SEP EOS"
        );
    }

    #[test]
    fn invalid_song_is_rejected() {
        let mut song = minimal_song();
        song.sentences[0].syllables[0].note_indices = vec![];
        assert!(matches!(tokenize_song(&song), Err(RemiError::InvalidSong { .. })));
    }

    #[test]
    fn minimal_round_trip() {
        let song = minimal_song();
        let tokens = tokenize_song(&song).unwrap();
        let back = detokenize_song(&tokens, &LyricSheet::of_song(&song), &SongTags::of_song(&song))
            .unwrap();
        assert_eq!(back, song);
    }

    #[test]
    fn dur_before_pitch_fails_detokenization_with_index() {
        let song = minimal_song();
        let tokens = parse_stream("SEQ SYL BAR POS_0 DUR_4 PITCH_60 SEP EOS").unwrap();
        let err = detokenize_song(&tokens, &LyricSheet::of_song(&song), &SongTags::of_song(&song))
            .unwrap_err();
        assert!(matches!(err, RemiError::Grammar { index: 4, .. }), "{err:?}");
    }

    #[test]
    fn lyric_count_mismatch_is_detected() {
        let song = minimal_song();
        let tokens = tokenize_song(&song).unwrap();
        let mut lyrics = LyricSheet::of_song(&song);
        lyrics.sentences[0].syllables.push(("人".into(), 1));
        let err = detokenize_song(&tokens, &lyrics, &SongTags::of_song(&song)).unwrap_err();
        // The stream closes the sentence while the lyrics still expect a
        // syllable, which surfaces as a grammar violation at the SEP.
        assert!(
            matches!(err, RemiError::Grammar { .. } | RemiError::CountMismatch(..)),
            "{err:?}"
        );
    }

    #[test]
    fn synthetic_round_trip_small_batch() {
        let songs = gen_synthetic(&CorpusSpec::new(25, 42)).unwrap();
        for song in &songs {
            let tokens = tokenize_song(song).unwrap();
            let back =
                detokenize_song(&tokens, &LyricSheet::of_song(song), &SongTags::of_song(song))
                    .unwrap();
            assert_eq!(&back, song, "round-trip mismatch for {}", song.id);
        }
    }

    #[test]
    fn sentence_streams_are_rebased_and_self_contained() {
        let mut song = minimal_song();
        song.sentences[0].notes = vec![Note::new(130, 4, 60)];
        let tokens = tokenize_sentence(&song.sentences[0]).unwrap();
        assert_eq!(format_stream(&tokens), "SEQ SYL BAR POS_2 PITCH_60 DUR_4 SEP EOS");
    }

    #[test]
    fn alignment_conservation_counts() {
        let songs = gen_synthetic(&CorpusSpec::new(10, 99)).unwrap();
        for song in &songs {
            let tokens = tokenize_song(song).unwrap();
            let syl = tokens.iter().filter(|t| **t == Token::Syl).count();
            let sep = tokens.iter().filter(|t| **t == Token::Sep).count();
            let pitch = tokens.iter().filter(|t| matches!(t, Token::Pitch(_))).count();
            let dur = tokens.iter().filter(|t| matches!(t, Token::Dur(_))).count();
            assert_eq!(syl, song.num_syllables());
            assert_eq!(sep, song.sentences.len());
            assert_eq!(pitch, song.num_notes());
            assert_eq!(dur, song.num_notes());
        }
    }
}
