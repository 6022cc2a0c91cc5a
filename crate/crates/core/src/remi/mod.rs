//! REMI-Aligned token representation: bidirectional conversion between song
//! records and token streams, the stream grammar used for constrained
//! decoding, and the token→syllable map that drives per-syllable
//! conditioning.

mod grammar;
mod token;
mod tokenize;

pub use grammar::{token_syllable_map, GrammarState, KindSet};
pub use token::{
    decode_ids, encode_ids, format_stream, parse_stream, Token, TokenKind, Vocabulary, VOCAB_SIZE,
};
pub use tokenize::{
    detokenize_song, tokenize_sentence, tokenize_song, LyricSheet, SentenceLyric, SongTags,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RemiError {
    #[error("invalid song {song}: {first}")]
    InvalidSong { song: String, first: String },
    #[error("grammar violation at token {index} ({got}): expected {expected}")]
    Grammar { index: usize, got: String, expected: String },
    #[error("stream ended early: expected {expected}")]
    Truncated { expected: String },
    #[error("token/lyric count mismatch: {0}")]
    CountMismatch(String),
    #[error("unknown token name `{name}` at position {index}")]
    ParseName { index: usize, name: String },
    #[error("token id {0} out of range")]
    BadId(usize),
    #[error("empty or zero-length sentence in lyric structure")]
    EmptyLyrics,
}
