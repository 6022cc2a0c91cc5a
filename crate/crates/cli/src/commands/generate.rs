//! The generate command: request file in, melody out.

use std::path::PathBuf;

use clap::Args;

use l2m_core::lyric::ToneTable;
use l2m_core::model::{generate, resolve_request, Checkpoint, GenerationRequest};
use l2m_core::remi::format_stream;
use l2m_core::score::{export_midi, validate_song, write_corpus};

use crate::config::Effective;
use crate::error::{Classify, CliError};

#[derive(Args)]
pub struct GenerateArgs {
    /// Trained model checkpoint (model.ckpt).
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Generation request (JSON).
    #[arg(long)]
    pub request: PathBuf,
    /// Run directory for song.jsonl, tokens.txt, and config.toml.
    #[arg(long)]
    pub out: PathBuf,
    /// Also export the melody as a MIDI file.
    #[arg(long)]
    pub midi: bool,
}

pub fn generate_cmd(run: &Effective, args: &GenerateArgs) -> Result<(), CliError> {
    let (ckpt, _) = Checkpoint::load(&args.checkpoint)
        .data_err(&format!("loading checkpoint {}", args.checkpoint.display()))?;
    let quantizer = ckpt.quantizer.as_ref().ok_or_else(|| {
        CliError::data(format!(
            "checkpoint {} has no quantizer; it cannot resolve attribute classes",
            args.checkpoint.display()
        ))
    })?;

    let text = std::fs::read_to_string(&args.request)
        .data_err(&format!("reading request {}", args.request.display()))?;
    let request = GenerationRequest::from_json(&text)
        .data_err(&format!("parsing request {}", args.request.display()))?;
    let resolved = resolve_request(&request, &ckpt.config, &ckpt.vocab, quantizer, ToneTable::bundled())
        .data_err("resolving request")?;

    let mut sampling = resolved.sampling;
    if run.seed_from_flag {
        sampling.seed = run.seed;
    }

    let output = generate(&ckpt.params, &ckpt.config, &resolved.cond, &resolved.lyrics, &resolved.tags, &sampling)
        .runtime_err("generating")?;
    let violations = validate_song(&output.song);
    if !violations.is_empty() {
        log::warn!("generated song has {} validation issues; first: {}", violations.len(), violations[0]);
    }

    std::fs::create_dir_all(&args.out).runtime_err("creating output directory")?;
    write_corpus(std::slice::from_ref(&output.song), args.out.join("song.jsonl"))
        .runtime_err("writing song")?;
    let mut stream = format_stream(&output.tokens);
    stream.push('\n');
    std::fs::write(args.out.join("tokens.txt"), stream).runtime_err("writing tokens")?;
    if args.midi {
        let path = args.out.join(format!("{}.mid", output.song.id));
        export_midi(&output.song, &path).runtime_err("writing MIDI")?;
    }
    let mut used = run.clone();
    used.sampling = sampling;
    used.echo(&args.out)?;

    let notes: usize = output.song.sentences.iter().map(|s| s.notes.len()).sum();
    println!(
        "generated {}: {} tokens, {notes} notes across {} sentences; wrote {}",
        output.song.id,
        output.tokens.len(),
        output.song.num_sentences(),
        args.out.display()
    );
    Ok(())
}
