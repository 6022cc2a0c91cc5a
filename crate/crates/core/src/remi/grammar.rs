//! The stream grammar: which token may come next, at kind and payload level.
//!
//! The grammar enforces the note-group shape (`BAR* POS PITCH DUR`), the
//! alignment structure (every syllable gets at least one note group, SEP only
//! once a sentence's syllables are exhausted, EOS only after the last SEP),
//! and temporal sanity: positions never step backwards, so decoded notes
//! cannot overlap.

use crate::score::TICKS_PER_BAR;

use super::token::{Token, TokenKind, Vocabulary, VOCAB_SIZE};
use super::RemiError;

/// A set of token kinds, used as the kind-level decoding mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct KindSet(u16);

impl KindSet {
    pub fn empty() -> KindSet {
        KindSet(0)
    }

    pub fn insert(&mut self, kind: TokenKind) {
        self.0 |= kind.bit();
    }

    pub fn contains(self, kind: TokenKind) -> bool {
        self.0 & kind.bit() != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = TokenKind> {
        TokenKind::ALL.into_iter().filter(move |k| self.contains(*k))
    }

    pub fn names(self) -> String {
        let names: Vec<&str> = self.iter().map(TokenKind::name).collect();
        if names.is_empty() {
            "nothing (stream complete)".to_string()
        } else {
            names.join("|")
        }
    }
}

impl FromIterator<TokenKind> for KindSet {
    fn from_iter<I: IntoIterator<Item = TokenKind>>(iter: I) -> Self {
        let mut set = KindSet::empty();
        for k in iter {
            set.insert(k);
        }
        set
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Start,
    AfterSeq,
    /// A SYL or BAR was just consumed; a note group must continue.
    NotePending,
    AfterPos,
    AfterPitch,
    AfterDur,
    AfterSep,
    Done,
}

/// Incremental acceptor for token streams.
///
/// Constructed [`GrammarState::new`] with per-sentence syllable counts it
/// enforces the full alignment budget (the mode used for constrained
/// decoding); [`GrammarState::unconstrained`] checks only structural shape,
/// for streams whose lyric structure is unknown.
#[derive(Debug, Clone)]
pub struct GrammarState {
    counts: Option<Vec<usize>>,
    sent_idx: usize,
    syl_remaining: usize,
    phase: Phase,
    bars: u64,
    write_head: u64,
    pending_onset: u64,
}

impl GrammarState {
    /// Grammar for a known lyric structure: `syllable_counts[i]` is the
    /// number of syllables of sentence `i`.
    pub fn new(syllable_counts: &[usize]) -> Result<GrammarState, RemiError> {
        if syllable_counts.is_empty() || syllable_counts.contains(&0) {
            return Err(RemiError::EmptyLyrics);
        }
        Ok(GrammarState {
            counts: Some(syllable_counts.to_vec()),
            sent_idx: 0,
            syl_remaining: 0,
            phase: Phase::Start,
            bars: 0,
            write_head: 0,
            pending_onset: 0,
        })
    }

    /// Structure-only grammar (syllable/sentence budgets unknown).
    pub fn unconstrained() -> GrammarState {
        GrammarState {
            counts: None,
            sent_idx: 0,
            syl_remaining: 0,
            phase: Phase::Start,
            bars: 0,
            write_head: 0,
            pending_onset: 0,
        }
    }

    /// Whether the stream consumed so far is a complete valid stream.
    pub fn is_complete(&self) -> bool {
        self.phase == Phase::Done
    }

    /// BAR tokens consumed so far.
    pub fn bars(&self) -> u64 {
        self.bars
    }

    /// Earliest tick the next note may start at.
    pub fn write_head(&self) -> u64 {
        self.write_head
    }

    /// Smallest legal POS payload in the current bar, if POS is legal now.
    pub fn pos_low(&self) -> Option<u8> {
        if self.bars == 0 {
            return None;
        }
        let bar_start = (self.bars - 1) * TICKS_PER_BAR as u64;
        let low = self.write_head.saturating_sub(bar_start);
        (low < TICKS_PER_BAR as u64).then_some(low as u8)
    }

    fn note_start_kinds(&self) -> KindSet {
        let mut set = KindSet::empty();
        set.insert(TokenKind::Bar);
        if self.pos_low().is_some() {
            set.insert(TokenKind::Pos);
        }
        set
    }

    /// The kinds that keep the stream extensible to a complete valid stream.
    pub fn legal_next_kinds(&self) -> KindSet {
        let mut set = KindSet::empty();
        match self.phase {
            Phase::Start => set.insert(TokenKind::Seq),
            Phase::AfterSeq => set.insert(TokenKind::Syl),
            Phase::NotePending => set = self.note_start_kinds(),
            Phase::AfterPos => set.insert(TokenKind::Pitch),
            Phase::AfterPitch => set.insert(TokenKind::Dur),
            Phase::AfterDur => {
                set = self.note_start_kinds();
                match &self.counts {
                    Some(_) => {
                        if self.syl_remaining > 0 {
                            set.insert(TokenKind::Syl);
                        } else {
                            set.insert(TokenKind::Sep);
                        }
                    }
                    None => {
                        set.insert(TokenKind::Syl);
                        set.insert(TokenKind::Sep);
                    }
                }
            }
            Phase::AfterSep => match &self.counts {
                Some(counts) => {
                    if self.sent_idx < counts.len() {
                        set.insert(TokenKind::Syl);
                    } else {
                        set.insert(TokenKind::Eos);
                    }
                }
                None => {
                    set.insert(TokenKind::Syl);
                    set.insert(TokenKind::Eos);
                }
            },
            Phase::Done => {}
        }
        set
    }

    /// Per-id legality under the fixed vocabulary; `mask.len()` must be
    /// [`VOCAB_SIZE`]. POS ids below the write head are masked out.
    pub fn fill_legal_mask(&self, mask: &mut [bool]) {
        assert_eq!(mask.len(), VOCAB_SIZE, "mask must cover the vocabulary");
        mask.fill(false);
        for kind in self.legal_next_kinds().iter() {
            let (lo, hi) = Vocabulary.kind_range(kind);
            let lo = if kind == TokenKind::Pos {
                lo + self.pos_low().expect("POS legal implies a payload floor") as usize
            } else {
                lo
            };
            for slot in mask.iter_mut().take(hi + 1).skip(lo) {
                *slot = true;
            }
        }
    }

    pub fn legal_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; VOCAB_SIZE];
        self.fill_legal_mask(&mut mask);
        mask
    }

    /// Consumes one token, or reports a grammar violation at `index`.
    pub fn accept(&mut self, token: Token, index: usize) -> Result<(), RemiError> {
        let legal = self.legal_next_kinds();
        let violation = |expected: String| RemiError::Grammar {
            index,
            got: token.name(),
            expected,
        };
        if !token.is_well_formed() {
            return Err(violation("a token with an in-range payload".to_string()));
        }
        if !legal.contains(token.kind()) {
            return Err(violation(legal.names()));
        }
        match token {
            Token::Pad => unreachable!("PAD is never legal"),
            Token::Seq => {
                if let Some(counts) = &self.counts {
                    self.syl_remaining = counts[0];
                }
                self.phase = Phase::AfterSeq;
            }
            Token::Syl => {
                if self.counts.is_some() {
                    self.syl_remaining -= 1;
                }
                self.phase = Phase::NotePending;
            }
            Token::Bar => {
                self.bars += 1;
                self.phase = Phase::NotePending;
            }
            Token::Pos(p) => {
                let low = self.pos_low().expect("POS legal implies a payload floor");
                if p < low {
                    return Err(violation(format!("POS_{low}..POS_63 (write head)")));
                }
                self.pending_onset = (self.bars - 1) * TICKS_PER_BAR as u64 + p as u64;
                self.phase = Phase::AfterPos;
            }
            Token::Pitch(_) => self.phase = Phase::AfterPitch,
            Token::Dur(d) => {
                self.write_head = self.pending_onset + d as u64;
                self.phase = Phase::AfterDur;
            }
            Token::Sep => {
                self.sent_idx += 1;
                if let Some(counts) = &self.counts {
                    if self.sent_idx < counts.len() {
                        self.syl_remaining = counts[self.sent_idx];
                    }
                }
                self.phase = Phase::AfterSep;
            }
            Token::Eos => self.phase = Phase::Done,
        }
        Ok(())
    }

    /// Runs the whole stream through [`GrammarState::accept`] and requires
    /// completeness.
    pub fn accept_stream(&mut self, tokens: &[Token]) -> Result<(), RemiError> {
        for (i, &t) in tokens.iter().enumerate() {
            self.accept(t, i)?;
        }
        if !self.is_complete() {
            return Err(RemiError::Truncated { expected: self.legal_next_kinds().names() });
        }
        Ok(())
    }
}

/// Maps every token position to the global index of the governing syllable
/// (the most recent SYL at or before it; SEQ maps to syllable 0).
pub fn token_syllable_map(tokens: &[Token]) -> Result<Vec<usize>, RemiError> {
    let mut state = GrammarState::unconstrained();
    let mut map = Vec::with_capacity(tokens.len());
    let mut seen = 0usize;
    for (i, &t) in tokens.iter().enumerate() {
        state.accept(t, i)?;
        if t == Token::Syl {
            seen += 1;
        }
        map.push(seen.saturating_sub(1));
    }
    if !state.is_complete() {
        return Err(RemiError::Truncated { expected: state.legal_next_kinds().names() });
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::super::token::parse_stream;
    use super::*;

    fn run(counts: &[usize], text: &str) -> Result<GrammarState, RemiError> {
        let tokens = parse_stream(text).unwrap();
        let mut state = GrammarState::new(counts)?;
        state.accept_stream(&tokens)?;
        Ok(state)
    }

    #[test]
    fn minimal_stream_is_accepted() {
        run(&[1], "SEQ SYL BAR POS_0 PITCH_60 DUR_4 SEP EOS").unwrap();
    }

    #[test]
    fn after_seq_only_syl() {
        let mut state = GrammarState::new(&[2, 1]).unwrap();
        state.accept(Token::Seq, 0).unwrap();
        let kinds: Vec<_> = state.legal_next_kinds().iter().collect();
        assert_eq!(kinds, vec![TokenKind::Syl]);
    }

    #[test]
    fn after_pitch_only_dur() {
        let tokens = parse_stream("SEQ SYL BAR POS_0 PITCH_60").unwrap();
        let mut state = GrammarState::new(&[1]).unwrap();
        for (i, &t) in tokens.iter().enumerate() {
            state.accept(t, i).unwrap();
        }
        let kinds: Vec<_> = state.legal_next_kinds().iter().collect();
        assert_eq!(kinds, vec![TokenKind::Dur]);
    }

    #[test]
    fn after_final_sep_only_eos() {
        let tokens = parse_stream("SEQ SYL BAR POS_0 PITCH_60 DUR_4 SEP").unwrap();
        let mut state = GrammarState::new(&[1]).unwrap();
        for (i, &t) in tokens.iter().enumerate() {
            state.accept(t, i).unwrap();
        }
        let kinds: Vec<_> = state.legal_next_kinds().iter().collect();
        assert_eq!(kinds, vec![TokenKind::Eos]);
    }

    #[test]
    fn dur_before_pitch_is_rejected_with_index() {
        let err = run(&[1], "SEQ SYL BAR POS_0 DUR_4").unwrap_err();
        match err {
            RemiError::Grammar { index, .. } => assert_eq!(index, 4),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn sep_before_syllables_are_done_is_rejected() {
        assert!(run(&[2], "SEQ SYL BAR POS_0 PITCH_60 DUR_4 SEP EOS").is_err());
    }

    #[test]
    fn syl_beyond_the_sentence_budget_is_rejected() {
        assert!(run(&[1], "SEQ SYL BAR POS_0 PITCH_60 DUR_4 SYL POS_8 PITCH_62 DUR_4 SEP EOS").is_err());
    }

    #[test]
    fn melisma_continues_without_syl() {
        run(&[1], "SEQ SYL BAR POS_0 PITCH_60 DUR_4 POS_4 PITCH_62 DUR_4 SEP EOS").unwrap();
    }

    #[test]
    fn positions_may_not_step_backwards() {
        // Second note would start at tick 2 while the first ends at tick 4.
        let err = run(&[1], "SEQ SYL BAR POS_0 PITCH_60 DUR_4 POS_2 PITCH_62 DUR_4 SEP EOS");
        assert!(err.is_err());
    }

    #[test]
    fn full_bar_forces_a_bar_token() {
        let tokens = parse_stream("SEQ SYL BAR POS_0 PITCH_60 DUR_64").unwrap();
        let mut state = GrammarState::new(&[1]).unwrap();
        for (i, &t) in tokens.iter().enumerate() {
            state.accept(t, i).unwrap();
        }
        assert!(state.pos_low().is_none());
        let kinds = state.legal_next_kinds();
        assert!(kinds.contains(TokenKind::Bar));
        assert!(!kinds.contains(TokenKind::Pos));
    }

    #[test]
    fn consecutive_bars_skip_empty_bars() {
        run(&[1], "SEQ SYL BAR BAR BAR POS_5 PITCH_60 DUR_4 SEP EOS").unwrap();
    }

    #[test]
    fn payload_mask_respects_the_write_head() {
        let tokens = parse_stream("SEQ SYL BAR POS_0 PITCH_60 DUR_8").unwrap();
        let mut state = GrammarState::new(&[1]).unwrap();
        for (i, &t) in tokens.iter().enumerate() {
            state.accept(t, i).unwrap();
        }
        let mask = state.legal_mask();
        let v = Vocabulary;
        assert!(!mask[v.id(Token::Pos(7))]);
        assert!(mask[v.id(Token::Pos(8))]);
        assert!(mask[v.id(Token::Bar)]);
        assert!(!mask[v.id(Token::Pad)]);
        assert!(!mask[v.id(Token::Pitch(60))]);
    }

    #[test]
    fn pad_is_never_legal() {
        let mut state = GrammarState::new(&[1]).unwrap();
        assert!(state.accept(Token::Pad, 0).is_err());
    }

    #[test]
    fn zero_syllable_sentences_are_rejected_up_front() {
        assert!(GrammarState::new(&[]).is_err());
        assert!(GrammarState::new(&[2, 0]).is_err());
    }

    #[test]
    fn syllable_map_minimal_stream() {
        let tokens = parse_stream("SEQ SYL BAR POS_0 PITCH_60 DUR_4 SEP EOS").unwrap();
        assert_eq!(token_syllable_map(&tokens).unwrap(), vec![0; 8]);
    }

    #[test]
    fn syllable_map_two_sentences() {
        let tokens = parse_stream(
            "SEQ SYL BAR POS_0 PITCH_60 DUR_4 SEP SYL POS_8 PITCH_62 DUR_4 SEP EOS",
        )
        .unwrap();
        let map = token_syllable_map(&tokens).unwrap();
        assert_eq!(map, vec![0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1]);
    }

    #[test]
    fn syllable_map_rejects_truncated_streams() {
        let tokens = parse_stream("SEQ SYL BAR POS_0 PITCH_60 DUR_4").unwrap();
        assert!(matches!(token_syllable_map(&tokens), Err(RemiError::Truncated { .. })));
    }
}
