//! Token type and the fixed vocabulary layout.

use serde::{Deserialize, Serialize};

use super::RemiError;

/// One REMI-Aligned token. `Pos` is the position within the current bar in
/// 64ths of a bar (0–63), `Pitch` a MIDI number (0–127), `Dur` a duration in
/// ticks (1–128). `Pad` is reserved for batch packing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Token {
    Pad,
    Seq,
    Eos,
    Sep,
    Syl,
    Bar,
    Pos(u8),
    Pitch(u8),
    Dur(u8),
}

/// Token kind without payload; the unit the grammar reasons about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TokenKind {
    Pad,
    Seq,
    Eos,
    Sep,
    Syl,
    Bar,
    Pos,
    Pitch,
    Dur,
}

impl TokenKind {
    pub const ALL: [TokenKind; 9] = [
        TokenKind::Pad,
        TokenKind::Seq,
        TokenKind::Eos,
        TokenKind::Sep,
        TokenKind::Syl,
        TokenKind::Bar,
        TokenKind::Pos,
        TokenKind::Pitch,
        TokenKind::Dur,
    ];

    pub(crate) fn bit(self) -> u16 {
        1 << (self as u16)
    }

    pub fn name(self) -> &'static str {
        match self {
            TokenKind::Pad => "PAD",
            TokenKind::Seq => "SEQ",
            TokenKind::Eos => "EOS",
            TokenKind::Sep => "SEP",
            TokenKind::Syl => "SYL",
            TokenKind::Bar => "BAR",
            TokenKind::Pos => "POS",
            TokenKind::Pitch => "PITCH",
            TokenKind::Dur => "DUR",
        }
    }
}

impl Token {
    pub fn kind(self) -> TokenKind {
        match self {
            Token::Pad => TokenKind::Pad,
            Token::Seq => TokenKind::Seq,
            Token::Eos => TokenKind::Eos,
            Token::Sep => TokenKind::Sep,
            Token::Syl => TokenKind::Syl,
            Token::Bar => TokenKind::Bar,
            Token::Pos(_) => TokenKind::Pos,
            Token::Pitch(_) => TokenKind::Pitch,
            Token::Dur(_) => TokenKind::Dur,
        }
    }

    /// Checks the payload range invariants.
    pub fn is_well_formed(self) -> bool {
        match self {
            Token::Pos(p) => p < 64,
            Token::Pitch(m) => m < 128,
            Token::Dur(d) => (1..=128).contains(&d),
            _ => true,
        }
    }

    /// The stream-text name, e.g. `POS_12`.
    pub fn name(self) -> String {
        match self {
            Token::Pos(p) => format!("POS_{p}"),
            Token::Pitch(m) => format!("PITCH_{m}"),
            Token::Dur(d) => format!("DUR_{d}"),
            other => other.kind().name().to_string(),
        }
    }
}

impl std::fmt::Display for Token {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.name())
    }
}

/// Total vocabulary size: 6 specials + 64 positions + 128 pitches + 128
/// durations.
pub const VOCAB_SIZE: usize = 326;

const POS_BASE: usize = 6;
const PITCH_BASE: usize = POS_BASE + 64;
const DUR_BASE: usize = PITCH_BASE + 128;

/// The fixed token↔id bijection: PAD=0, SEQ=1, EOS=2, SEP=3, SYL=4, BAR=5,
/// then POS 0–63, PITCH 0–127, DUR 1–128.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Vocabulary;

impl Vocabulary {
    pub const fn size(self) -> usize {
        VOCAB_SIZE
    }

    pub fn id(self, token: Token) -> usize {
        debug_assert!(token.is_well_formed(), "malformed token {token:?}");
        match token {
            Token::Pad => 0,
            Token::Seq => 1,
            Token::Eos => 2,
            Token::Sep => 3,
            Token::Syl => 4,
            Token::Bar => 5,
            Token::Pos(p) => POS_BASE + p as usize,
            Token::Pitch(m) => PITCH_BASE + m as usize,
            Token::Dur(d) => DUR_BASE + (d as usize - 1),
        }
    }

    pub fn token(self, id: usize) -> Result<Token, RemiError> {
        Ok(match id {
            0 => Token::Pad,
            1 => Token::Seq,
            2 => Token::Eos,
            3 => Token::Sep,
            4 => Token::Syl,
            5 => Token::Bar,
            i if (POS_BASE..PITCH_BASE).contains(&i) => Token::Pos((i - POS_BASE) as u8),
            i if (PITCH_BASE..DUR_BASE).contains(&i) => Token::Pitch((i - PITCH_BASE) as u8),
            i if (DUR_BASE..VOCAB_SIZE).contains(&i) => Token::Dur((i - DUR_BASE + 1) as u8),
            _ => return Err(RemiError::BadId(id)),
        })
    }

    /// Inclusive id range of one kind's payload block (specials are 1-wide).
    pub fn kind_range(self, kind: TokenKind) -> (usize, usize) {
        match kind {
            TokenKind::Pad => (0, 0),
            TokenKind::Seq => (1, 1),
            TokenKind::Eos => (2, 2),
            TokenKind::Sep => (3, 3),
            TokenKind::Syl => (4, 4),
            TokenKind::Bar => (5, 5),
            TokenKind::Pos => (POS_BASE, PITCH_BASE - 1),
            TokenKind::Pitch => (PITCH_BASE, DUR_BASE - 1),
            TokenKind::Dur => (DUR_BASE, VOCAB_SIZE - 1),
        }
    }
}

/// Token ids of a stream under the fixed vocabulary.
pub fn encode_ids(tokens: &[Token]) -> Vec<usize> {
    tokens.iter().map(|&t| Vocabulary.id(t)).collect()
}

/// Tokens from ids; fails on out-of-range ids.
pub fn decode_ids(ids: &[usize]) -> Result<Vec<Token>, RemiError> {
    ids.iter().map(|&i| Vocabulary.token(i)).collect()
}

/// Whitespace-joined token names, e.g. `SEQ SYL BAR POS_0 PITCH_60 DUR_4`.
pub fn format_stream(tokens: &[Token]) -> String {
    tokens.iter().map(|t| t.name()).collect::<Vec<_>>().join(" ")
}

/// Inverse of [`format_stream`].
pub fn parse_stream(text: &str) -> Result<Vec<Token>, RemiError> {
    text.split_whitespace()
        .enumerate()
        .map(|(index, name)| parse_token(name).ok_or_else(|| RemiError::ParseName {
            index,
            name: name.to_string(),
        }))
        .collect()
}

fn parse_token(name: &str) -> Option<Token> {
    let token = match name {
        "PAD" => Token::Pad,
        "SEQ" => Token::Seq,
        "EOS" => Token::Eos,
        "SEP" => Token::Sep,
        "SYL" => Token::Syl,
        "BAR" => Token::Bar,
        _ => {
            let (kind, payload) = name.split_once('_')?;
            let value: u8 = payload.parse().ok()?;
            match kind {
                "POS" => Token::Pos(value),
                "PITCH" => Token::Pitch(value),
                "DUR" => Token::Dur(value),
                _ => return None,
            }
        }
    };
    token.is_well_formed().then_some(token)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_matches_the_documented_constants() {
        let v = Vocabulary;
        assert_eq!(v.id(Token::Pad), 0);
        assert_eq!(v.id(Token::Seq), 1);
        assert_eq!(v.id(Token::Eos), 2);
        assert_eq!(v.id(Token::Sep), 3);
        assert_eq!(v.id(Token::Syl), 4);
        assert_eq!(v.id(Token::Bar), 5);
        assert_eq!(v.id(Token::Pos(0)), 6);
        assert_eq!(v.id(Token::Pos(63)), 69);
        assert_eq!(v.id(Token::Pitch(0)), 70);
        assert_eq!(v.id(Token::Pitch(127)), 197);
        assert_eq!(v.id(Token::Dur(1)), 198);
        assert_eq!(v.id(Token::Dur(128)), 325);
        assert_eq!(VOCAB_SIZE, 6 + 64 + 128 + 128);
    }

    #[test]
    fn id_token_bijection_over_the_whole_vocabulary() {
        let v = Vocabulary;
        for id in 0..VOCAB_SIZE {
            let token = v.token(id).unwrap();
            assert!(token.is_well_formed());
            assert_eq!(v.id(token), id);
        }
        assert!(v.token(VOCAB_SIZE).is_err());
    }

    #[test]
    fn stream_text_round_trip() {
        let tokens = vec![
            Token::Seq,
            Token::Syl,
            Token::Bar,
            Token::Pos(0),
            Token::Pitch(60),
            Token::Dur(4),
            Token::Sep,
            Token::Eos,
        ];
        let text = format_stream(&tokens);
        assert_eq!(text, "SEQ SYL BAR POS_0 PITCH_60 DUR_4 SEP EOS");
        assert_eq!(parse_stream(&text).unwrap(), tokens);
    }

    #[test]
    fn parse_rejects_out_of_range_payloads() {
        assert!(parse_stream("POS_64").is_err());
        assert!(parse_stream("DUR_0").is_err());
        assert!(parse_stream("DUR_129").is_err());
        assert!(parse_stream("PITCH_128").is_err());
        assert!(parse_stream("NOPE_1").is_err());
        assert!(parse_stream("POS_x").is_err());
    }

    #[test]
    fn id_round_trip_for_streams() {
        let tokens = parse_stream("SEQ SYL BAR POS_3 PITCH_72 DUR_16 SEP EOS").unwrap();
        assert_eq!(decode_ids(&encode_ids(&tokens)).unwrap(), tokens);
    }
}
