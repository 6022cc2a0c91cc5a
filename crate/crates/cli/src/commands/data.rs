//! Corpus-side commands: synthesize, validate, tokenize, export.

use std::path::PathBuf;

use clap::Args;

use l2m_core::remi::{detokenize_song, format_stream, tokenize_song, LyricSheet, SongTags};
use l2m_core::score::{export_midi, gen_synthetic, load_corpus, write_corpus, SongRecord};

use crate::config::Effective;
use crate::error::{Classify, CliError};

pub fn read_corpus(path: &PathBuf) -> Result<Vec<SongRecord>, CliError> {
    let songs = load_corpus(path).data_err(&format!("loading corpus {}", path.display()))?;
    if songs.is_empty() {
        return Err(CliError::data(format!("corpus {} has no songs", path.display())));
    }
    Ok(songs)
}

#[derive(Args)]
pub struct SynthArgs {
    /// Number of songs to generate.
    #[arg(long, default_value_t = 32)]
    pub songs: usize,
    /// Output corpus path (JSONL).
    #[arg(long)]
    pub out: PathBuf,
}

pub fn synth(run: &Effective, args: &SynthArgs) -> Result<(), CliError> {
    if args.songs == 0 {
        return Err(CliError::config("--songs must be positive"));
    }
    let spec = run.synth.spec(args.songs, run.seed);
    let songs = gen_synthetic(&spec).config_err("synthesizing corpus")?;
    write_corpus(&songs, &args.out).runtime_err("writing corpus")?;
    let sentences: usize = songs.iter().map(|s| s.num_sentences()).sum();
    println!("wrote {} songs ({sentences} sentences) to {}", songs.len(), args.out.display());
    Ok(())
}

#[derive(Args)]
pub struct IngestArgs {
    /// Corpus to validate (JSONL).
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Re-emit the corpus in canonical form.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn ingest(args: &IngestArgs) -> Result<(), CliError> {
    let songs = read_corpus(&args.input)?;
    let sentences: usize = songs.iter().map(|s| s.num_sentences()).sum();
    let syllables: usize = songs.iter().map(|s| s.num_syllables()).sum();
    let notes: usize = songs
        .iter()
        .flat_map(|s| &s.sentences)
        .map(|s| s.notes.len())
        .sum();
    println!("{} songs, {sentences} sentences, {syllables} syllables, {notes} notes", songs.len());
    if let Some(out) = &args.out {
        write_corpus(&songs, out).runtime_err("writing corpus")?;
        println!("rewrote corpus to {}", out.display());
    }
    Ok(())
}

#[derive(Args)]
pub struct TokenizeArgs {
    /// Corpus to tokenize (JSONL).
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Write one `id: token token ...` line per song.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Detokenize each stream and require an exact match with the source.
    #[arg(long)]
    pub check_roundtrip: bool,
}

pub fn tokenize(args: &TokenizeArgs) -> Result<(), CliError> {
    let songs = read_corpus(&args.input)?;
    let mut lines = String::new();
    let mut total_tokens = 0usize;
    for song in &songs {
        let tokens = tokenize_song(song).data_err(&format!("tokenizing song {}", song.id))?;
        total_tokens += tokens.len();
        if args.check_roundtrip {
            let back = detokenize_song(&tokens, &LyricSheet::of_song(song), &SongTags::of_song(song))
                .data_err(&format!("detokenizing song {}", song.id))?;
            if &back != song {
                return Err(CliError::data(format!("song {} does not survive the round trip", song.id)));
            }
        }
        if args.out.is_some() {
            lines.push_str(&song.id);
            lines.push_str(": ");
            lines.push_str(&format_stream(&tokens));
            lines.push('\n');
        }
    }
    if let Some(out) = &args.out {
        std::fs::write(out, lines).runtime_err("writing token streams")?;
    }
    if args.check_roundtrip {
        println!("round trip ok: {}/{} songs", songs.len(), songs.len());
    }
    println!("{} songs, {total_tokens} tokens", songs.len());
    Ok(())
}

#[derive(Args)]
pub struct ExportMidiArgs {
    /// Corpus to export (JSONL).
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Export only this song id.
    #[arg(long)]
    pub song: Option<String>,
    /// Output `.mid` file (with --song) or directory (without).
    #[arg(long)]
    pub out: PathBuf,
}

pub fn export_midi_cmd(args: &ExportMidiArgs) -> Result<(), CliError> {
    let songs = read_corpus(&args.input)?;
    match &args.song {
        Some(id) => {
            let song = songs
                .iter()
                .find(|s| &s.id == id)
                .ok_or_else(|| CliError::data(format!("no song {id:?} in {}", args.input.display())))?;
            export_midi(song, &args.out).runtime_err("writing MIDI")?;
            println!("wrote {}", args.out.display());
        }
        None => {
            std::fs::create_dir_all(&args.out).runtime_err("creating output directory")?;
            for song in &songs {
                let path = args.out.join(format!("{}.mid", song.id));
                export_midi(song, &path).runtime_err(&format!("writing {}", path.display()))?;
            }
            println!("wrote {} MIDI files to {}", songs.len(), args.out.display());
        }
    }
    Ok(())
}
