//! Fitting commands: quantizer, melody model, feature codec, extraction,
//! and the finite-difference gradient audit.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::Args;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use l2m_core::attributes::{fit_quantizer, QuantizerModel, NUM_ATTRIBUTES};
use l2m_core::lyric::ToneTable;
use l2m_core::model::{
    init_params, item_loss, prepare_items, train, Checkpoint, ModelConfig, TrainStats,
};
use l2m_core::nn::{gradcheck, AdamState};
use l2m_core::score::{gen_synthetic, CorpusSpec, SongRecord};
use l2m_core::vq::{
    extract_features, format_features, parse_features, sentence_streams, train_vqvae, FeatureSet,
    VqCheckpoint, VqStats,
};

use crate::config::Effective;
use crate::error::{Classify, CliError};

use super::data::read_corpus;

#[derive(Args)]
pub struct FitQuantizerArgs {
    /// Corpus to fit on (JSONL).
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Classes per attribute; defaults to the model's `num_classes`.
    #[arg(long)]
    pub classes: Option<usize>,
    /// Output quantizer path.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn fit_quantizer_cmd(run: &Effective, args: &FitQuantizerArgs) -> Result<(), CliError> {
    let songs = read_corpus(&args.input)?;
    let k = args.classes.unwrap_or(run.model.num_classes);
    let quantizer = fit_quantizer(&songs, k).data_err("fitting quantizer")?;
    quantizer.save(&args.out).runtime_err("writing quantizer")?;
    let sentences: usize = songs.iter().map(|s| s.num_sentences()).sum();
    println!(
        "fitted {k}-class quantizer over {NUM_ATTRIBUTES} attributes from {sentences} sentences; wrote {}",
        args.out.display()
    );
    Ok(())
}

pub fn load_quantizer(path: &Path) -> Result<QuantizerModel, CliError> {
    QuantizerModel::load(path).data_err(&format!("loading quantizer {}", path.display()))
}

pub fn load_features(path: &Path) -> Result<FeatureSet, CliError> {
    let text =
        std::fs::read_to_string(path).data_err(&format!("reading features {}", path.display()))?;
    parse_features(&text).data_err(&format!("parsing features {}", path.display()))
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).runtime_err("creating output directory")
}

#[derive(Args)]
pub struct TrainArgs {
    /// Training corpus (JSONL).
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Fitted quantizer; omitted means fit on the training corpus.
    #[arg(long)]
    pub quantizer: Option<PathBuf>,
    /// Learned per-sentence features (from `extract-features`); implies the
    /// learned condition block.
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Run directory for model.ckpt, stats.csv, and config.toml.
    #[arg(long)]
    pub out: PathBuf,
    /// Override the configured step count.
    #[arg(long)]
    pub steps: Option<u64>,
    /// Override the configured batch size.
    #[arg(long)]
    pub batch: Option<usize>,
}

pub fn train_cmd(run: &Effective, args: &TrainArgs) -> Result<(), CliError> {
    let songs = read_corpus(&args.input)?;
    let mut cfg = run.model.clone();
    let mut tcfg = run.train.clone();
    if let Some(steps) = args.steps {
        tcfg.steps = steps;
    }
    if let Some(batch) = args.batch {
        tcfg.batch_size = batch;
    }
    if tcfg.steps == 0 || tcfg.batch_size == 0 {
        return Err(CliError::config("steps and batch size must be positive"));
    }

    let quantizer = match &args.quantizer {
        Some(path) => load_quantizer(path)?,
        None => {
            log::info!("no --quantizer given; fitting on the training corpus");
            fit_quantizer(&songs, cfg.num_classes).data_err("fitting quantizer")?
        }
    };
    if quantizer.k != cfg.num_classes {
        return Err(CliError::config(format!(
            "quantizer has {} classes, model expects {}",
            quantizer.k, cfg.num_classes
        )));
    }

    let learned = match &args.features {
        Some(path) => {
            let fs = load_features(path)?;
            if fs.d_latent != cfg.d_lyric {
                return Err(CliError::config(format!(
                    "feature width {} does not match the model's d_lyric {}",
                    fs.d_latent, cfg.d_lyric
                )));
            }
            cfg.flags.learned = true;
            Some(fs.learned_map())
        }
        None => None,
    };

    let vocab = l2m_core::model::LyricVocab::from_corpus(&songs);
    let items = prepare_items(&songs, &cfg, &vocab, &quantizer, ToneTable::bundled(), learned.as_ref())
        .data_err("preparing training items")?;

    let mut store = init_params(&cfg, vocab.len(), run.seed);
    let mut adam = AdamState::new();
    let log_every = tcfg.log_every.max(1);
    let history = train(&mut store, &mut adam, &cfg, &tcfg, &items, |stats| {
        if stats.step % log_every == 0 || stats.step == tcfg.steps {
            log::info!("step {}: loss {:.4} lr {:.6}", stats.step, stats.loss, stats.lr);
        }
    })
    .runtime_err("training")?;

    ensure_dir(&args.out)?;
    let mut used = run.clone();
    used.model = cfg.clone();
    used.train = tcfg;
    let ckpt = Checkpoint {
        config: cfg,
        vocab,
        quantizer: Some(quantizer),
        step: adam.step_count(),
        params: store,
        adam: Some(adam),
    };
    let hash = ckpt.save(args.out.join("model.ckpt")).runtime_err("writing checkpoint")?;
    std::fs::write(args.out.join("stats.csv"), train_stats_csv(&history))
        .runtime_err("writing stats.csv")?;
    used.echo(&args.out)?;
    let last = history.last().expect("at least one step");
    println!(
        "trained {} steps on {} songs; final loss {:.4}; checkpoint {} ({hash})",
        ckpt.step,
        songs.len(),
        last.loss,
        args.out.join("model.ckpt").display()
    );
    Ok(())
}

fn train_stats_csv(history: &[TrainStats]) -> String {
    let mut out = String::from("step,loss,lr,grad_norm\n");
    for s in history {
        let _ = writeln!(out, "{},{},{},{}", s.step, s.loss, s.lr, s.grad_norm);
    }
    out
}

#[derive(Args)]
pub struct TrainVqArgs {
    /// Training corpus (JSONL).
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Run directory for vq.ckpt, stats.csv, and config.toml.
    #[arg(long)]
    pub out: PathBuf,
    /// Override the configured step count.
    #[arg(long)]
    pub steps: Option<u64>,
    /// Override the configured batch size.
    #[arg(long)]
    pub batch: Option<usize>,
}

pub fn train_vq_cmd(run: &Effective, args: &TrainVqArgs) -> Result<(), CliError> {
    let songs = read_corpus(&args.input)?;
    let cfg = run.vq.clone();
    let mut tcfg = run.vq_train.clone();
    if let Some(steps) = args.steps {
        tcfg.steps = steps;
    }
    if let Some(batch) = args.batch {
        tcfg.batch_size = batch;
    }
    if tcfg.steps == 0 || tcfg.batch_size == 0 {
        return Err(CliError::config("steps and batch size must be positive"));
    }

    let streams = sentence_streams(&songs, &cfg).data_err("tokenizing sentences")?;
    let (store, adam, state, history) =
        train_vqvae(&cfg, &tcfg, &streams, |_| {}).runtime_err("training feature codec")?;

    ensure_dir(&args.out)?;
    let mut used = run.clone();
    used.vq = cfg.clone();
    used.vq_train = tcfg;
    let ckpt = VqCheckpoint {
        config: cfg,
        step: adam.step_count(),
        params: store,
        adam: Some(adam),
        state,
    };
    let hash = ckpt.save(args.out.join("vq.ckpt")).runtime_err("writing checkpoint")?;
    std::fs::write(args.out.join("stats.csv"), vq_stats_csv(&history))
        .runtime_err("writing stats.csv")?;
    used.echo(&args.out)?;
    let last = history.last().expect("at least one step");
    println!(
        "trained {} steps on {} sentence streams; final recon {:.4} accuracy {:.3}; checkpoint {} ({hash})",
        ckpt.step,
        streams.len(),
        last.recon,
        last.accuracy,
        args.out.join("vq.ckpt").display()
    );
    Ok(())
}

fn vq_stats_csv(history: &[VqStats]) -> String {
    let mut out = String::from("step,recon,codebook,commit,lr,accuracy,reseeded\n");
    for s in history {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            s.step, s.recon, s.codebook, s.commit, s.lr, s.accuracy, s.reseeded
        );
    }
    out
}

#[derive(Args)]
pub struct ExtractFeaturesArgs {
    /// Trained codec checkpoint (vq.ckpt).
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Corpus to encode (JSONL).
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Output feature file.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn extract_features_cmd(args: &ExtractFeaturesArgs) -> Result<(), CliError> {
    let (ckpt, hash) = VqCheckpoint::load(&args.checkpoint)
        .data_err(&format!("loading checkpoint {}", args.checkpoint.display()))?;
    let songs = read_corpus(&args.input)?;
    let features = extract_features(&ckpt.params, &ckpt.config, &songs, &hash)
        .data_err("encoding sentences")?;
    std::fs::write(&args.out, format_features(&features)).runtime_err("writing features")?;
    let sentences: usize = features.songs.values().map(Vec::len).sum();
    println!(
        "encoded {sentences} sentences from {} songs ({} groups, width {}); wrote {}",
        features.songs.len(),
        features.groups,
        features.d_latent,
        args.out.display()
    );
    Ok(())
}

#[derive(Args)]
pub struct GradcheckArgs {
    /// Coordinates probed per parameter tensor.
    #[arg(long, default_value_t = 6)]
    pub samples: usize,
    /// Maximum allowed relative error.
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
}

/// Audits the analytic gradients of a small model (every condition block
/// active) against central finite differences on synthetic data.
pub fn gradcheck_cmd(run: &Effective, args: &GradcheckArgs) -> Result<(), CliError> {
    let mut cfg = ModelConfig::toy();
    cfg.layers = 2;
    cfg.heads = 2;
    cfg.d_model = 16;
    cfg.d_ff = 32;
    cfg.d_lyric = 8;
    cfg.d_attr = 2;
    cfg.num_classes = 4;
    cfg.flags = l2m_core::model::ConditionFlags::all();

    let songs = gen_synthetic(&CorpusSpec::new(3, run.seed ^ 0x6c_32_6d))
        .runtime_err("synthesizing audit corpus")?;
    let vocab = l2m_core::model::LyricVocab::from_corpus(&songs);
    let quantizer = fit_quantizer(&songs, cfg.num_classes).runtime_err("fitting quantizer")?;
    let learned = fake_learned(&songs, cfg.d_lyric, run.seed);
    let items = prepare_items(&songs, &cfg, &vocab, &quantizer, ToneTable::bundled(), Some(&learned))
        .runtime_err("preparing items")?;

    let mut store = init_params(&cfg, vocab.len(), run.seed);
    let report = gradcheck(
        &mut store,
        |store, with_grads| items.iter().map(|item| item_loss(store, &cfg, item, with_grads)).sum(),
        args.tolerance,
        args.samples,
        run.seed,
    );

    let worst = report.worst().expect("at least one probe");
    println!(
        "checked {} coordinates; worst {} at {}[{},{}] (analytic {:+.3e}, numeric {:+.3e})",
        report.entries.len(),
        worst.rel_err,
        worst.name,
        worst.coord.0,
        worst.coord.1,
        worst.analytic,
        worst.numeric
    );
    if report.pass() {
        println!("gradcheck passed at tolerance {}", args.tolerance);
        Ok(())
    } else {
        let failed = report.entries.iter().filter(|e| e.rel_err > args.tolerance).count();
        Err(CliError::runtime(format!(
            "gradcheck failed: {failed} coordinates over tolerance {}",
            args.tolerance
        )))
    }
}

/// Deterministic stand-in for extracted features, one vector per sentence.
fn fake_learned(songs: &[SongRecord], width: usize, seed: u64) -> BTreeMap<String, Vec<Vec<f64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xfea7);
    songs
        .iter()
        .map(|song| {
            let rows = (0..song.num_sentences())
                .map(|_| (0..width).map(|_| rng.gen_range(-0.5..0.5)).collect())
                .collect();
            (song.id.clone(), rows)
        })
        .collect()
}
