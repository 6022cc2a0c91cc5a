//! `l2m` — a controllable lyric-to-melody toolkit.
//!
//! The pipeline: `synth` (or your own corpus) → `fit-quantizer` → optional
//! `train-vq` + `extract-features` → `train` → `generate`, with `evaluate`,
//! `controllability`, and `ablate` for measurement. Exit codes: 2 for
//! configuration errors, 3 for bad input data, 4 for runtime failures.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod error;

use commands::{data, eval, fit, generate};
use error::CliError;

#[derive(Parser)]
#[command(name = "l2m", version, about = "Controllable lyric-to-melody composition")]
struct Cli {
    /// Run-config TOML; falls back to the L2M_CONFIG env var.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed; overrides the config file and governs every stage.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus with controllable statistics.
    Synth(data::SynthArgs),
    /// Validate a corpus and report its size.
    Ingest(data::IngestArgs),
    /// Tokenize a corpus; optionally verify the exact round trip.
    Tokenize(data::TokenizeArgs),
    /// Fit the equal-frequency attribute quantizer.
    FitQuantizer(fit::FitQuantizerArgs),
    /// Train the conditioned melody model.
    Train(fit::TrainArgs),
    /// Train the sentence-level feature codec.
    TrainVq(fit::TrainVqArgs),
    /// Encode a corpus into per-sentence learned features.
    ExtractFeatures(fit::ExtractFeaturesArgs),
    /// Generate a melody from a request file.
    Generate(generate::GenerateArgs),
    /// Score generated songs against references with the same ids.
    Evaluate(eval::EvaluateArgs),
    /// Sweep attribute classes and report rank correlations.
    Controllability(eval::ControllabilityArgs),
    /// Compare checkpoints on one reference corpus.
    Ablate(eval::AblateArgs),
    /// Write corpus songs as MIDI files.
    ExportMidi(data::ExportMidiArgs),
    /// Audit analytic gradients against finite differences.
    Gradcheck(fit::GradcheckArgs),
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let effective = config::load(cli.config.as_deref(), cli.seed)?;
    match &cli.command {
        Command::Synth(args) => data::synth(&effective, args),
        Command::Ingest(args) => data::ingest(args),
        Command::Tokenize(args) => data::tokenize(args),
        Command::FitQuantizer(args) => fit::fit_quantizer_cmd(&effective, args),
        Command::Train(args) => fit::train_cmd(&effective, args),
        Command::TrainVq(args) => fit::train_vq_cmd(&effective, args),
        Command::ExtractFeatures(args) => fit::extract_features_cmd(args),
        Command::Generate(args) => generate::generate_cmd(&effective, args),
        Command::Evaluate(args) => eval::evaluate_cmd(args),
        Command::Controllability(args) => eval::controllability_cmd(&effective, args),
        Command::Ablate(args) => eval::ablate_cmd(&effective, args),
        Command::ExportMidi(args) => data::export_midi_cmd(args),
        Command::Gradcheck(args) => fit::gradcheck_cmd(&effective, args),
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        eprintln!("error: {:#}", e.inner());
        std::process::exit(e.code());
    }
}
