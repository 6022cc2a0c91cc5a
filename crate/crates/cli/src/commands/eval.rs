//! Evaluation commands: reference metrics, controllability sweeps, and
//! checkpoint ablations.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use clap::Args;

use l2m_core::attributes::{compute_attributes, AttrId};
use l2m_core::lyric::ToneTable;
use l2m_core::metrics::{
    ablation_table, controllability_csv, controllability_sweep, evaluate_pairs, AblationRow,
    SweepRow,
};
use l2m_core::model::{
    generate, resolve_request, Checkpoint, ClassSpec, GenerationRequest, ModelError,
    RequestSentence,
};
use l2m_core::score::{SongRecord, validate_song};

use crate::config::Effective;
use crate::error::{Classify, CliError};

use super::data::read_corpus;
use super::fit::load_features;

#[derive(Args)]
pub struct EvaluateArgs {
    /// Generated songs (JSONL).
    #[arg(long)]
    pub generated: PathBuf,
    /// Reference songs with matching ids (JSONL).
    #[arg(long)]
    pub reference: PathBuf,
    /// Directory for report.txt and report.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn evaluate_cmd(args: &EvaluateArgs) -> Result<(), CliError> {
    let generated = read_corpus(&args.generated)?;
    let reference = read_corpus(&args.reference)?;

    let ref_by_id: BTreeMap<&str, &SongRecord> =
        reference.iter().map(|s| (s.id.as_str(), s)).collect();
    let gen_ids: BTreeSet<&str> = generated.iter().map(|s| s.id.as_str()).collect();
    let missing: Vec<&str> =
        gen_ids.iter().filter(|id| !ref_by_id.contains_key(**id)).copied().collect();
    if !missing.is_empty() {
        return Err(CliError::data(format!(
            "{} generated songs have no reference (first: {:?})",
            missing.len(),
            missing[0]
        )));
    }
    let unmatched = reference.len() - gen_ids.len();
    if unmatched > 0 {
        log::warn!("{unmatched} reference songs have no generated counterpart and are ignored");
    }

    let pairs: Vec<(&SongRecord, &SongRecord)> =
        generated.iter().map(|g| (g, ref_by_id[g.id.as_str()])).collect();
    let report = evaluate_pairs(&pairs).data_err("computing metrics")?;

    print!("{}", report.to_text());
    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir).runtime_err("creating output directory")?;
        std::fs::write(dir.join("report.txt"), report.to_text()).runtime_err("writing report.txt")?;
        std::fs::write(dir.join("report.json"), report.to_json()).runtime_err("writing report.json")?;
        println!("wrote reports to {}", dir.display());
    }
    Ok(())
}

/// Builds a request that re-sings `song`'s lyrics; `attrs_for` decides the
/// attribute classes per sentence.
fn request_from_song(
    song: &SongRecord,
    id: String,
    attrs_for: impl Fn(usize) -> BTreeMap<String, ClassSpec>,
    learned: Option<&Vec<Vec<f64>>>,
) -> GenerationRequest {
    let sentences = song
        .sentences
        .iter()
        .enumerate()
        .map(|(i, s)| RequestSentence {
            syllables: s.syllables.iter().map(|syl| syl.text.clone()).collect(),
            tones: Some(s.syllables.iter().map(|syl| syl.tone).collect()),
            words: s.words.clone(),
            structure: s.structure,
            attributes: attrs_for(i),
            learned: learned.and_then(|rows| rows.get(i).cloned()),
        })
        .collect();
    GenerationRequest {
        id,
        key: song.key,
        emotion: song.emotion,
        bpm: song.bpm,
        sentences,
        sampling: Default::default(),
    }
}

/// Mixes sweep coordinates into the master seed so every generation draws
/// from a distinct, reproducible stream.
fn mix_seed(master: u64, parts: [u64; 3]) -> u64 {
    let mut x = master ^ 0x517c_c1b7_2722_0a95;
    for p in parts {
        x ^= p.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(x << 6).wrapping_add(x >> 2);
        x = x.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    }
    x
}

#[derive(Args)]
pub struct ControllabilityArgs {
    /// Trained model checkpoint (model.ckpt).
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Corpus providing the probe lyrics (JSONL).
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Attributes to sweep, comma separated.
    #[arg(long, default_value = "PM,DM,ND,Align")]
    pub attrs: String,
    /// Number of probe classes, spread evenly over the quantizer range.
    #[arg(long, default_value_t = 4)]
    pub probes: usize,
    /// Generations per probe class.
    #[arg(long, default_value_t = 2)]
    pub repeats: usize,
    /// Output CSV path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn controllability_cmd(run: &Effective, args: &ControllabilityArgs) -> Result<(), CliError> {
    let (ckpt, _) = Checkpoint::load(&args.checkpoint)
        .data_err(&format!("loading checkpoint {}", args.checkpoint.display()))?;
    let quantizer = ckpt
        .quantizer
        .as_ref()
        .ok_or_else(|| CliError::data("checkpoint has no quantizer"))?;
    let songs = read_corpus(&args.input)?;

    let mut attrs = Vec::new();
    for name in args.attrs.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        attrs.push(
            AttrId::from_name(name)
                .ok_or_else(|| CliError::config(format!("unknown attribute {name:?}")))?,
        );
    }
    if attrs.is_empty() {
        return Err(CliError::config("--attrs names no attributes"));
    }

    let k = ckpt.config.num_classes;
    if args.probes < 2 || args.repeats == 0 {
        return Err(CliError::config("need at least 2 probes and 1 repeat"));
    }
    let mut classes: Vec<usize> = (0..args.probes)
        .map(|i| ((i * (k - 1)) as f64 / (args.probes - 1) as f64).round() as usize)
        .collect();
    classes.dedup();
    if classes.len() < 2 {
        return Err(CliError::config(format!(
            "{} probes collapse to {} distinct classes of {k}",
            args.probes,
            classes.len()
        )));
    }

    let mut rows: Vec<SweepRow> = Vec::new();
    for &attr in &attrs {
        log::info!("sweeping {} over classes {classes:?}", attr.name());
        let row = controllability_sweep(attr, &classes, args.repeats, quantizer, |class, repeat| {
            let song = &songs[repeat % songs.len()];
            let request = request_from_song(
                song,
                format!("{}-{}-c{class}-r{repeat}", song.id, attr.name()),
                |_| BTreeMap::from([(attr.name().to_string(), ClassSpec::Class(class))]),
                None,
            );
            let resolved =
                resolve_request(&request, &ckpt.config, &ckpt.vocab, quantizer, ToneTable::bundled())?;
            let mut sampling = run.sampling;
            sampling.seed = mix_seed(run.seed, [attr.index() as u64, class as u64, repeat as u64]);
            let out = generate(&ckpt.params, &ckpt.config, &resolved.cond, &resolved.lyrics, &resolved.tags, &sampling)?;
            Ok::<SongRecord, ModelError>(out.song)
        })
        .runtime_err(&format!("sweeping {}", attr.name()))?;
        rows.push(row);
    }

    let csv = controllability_csv(&rows);
    print!("{csv}");
    if let Some(path) = &args.out {
        std::fs::write(path, &csv).runtime_err("writing CSV")?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

#[derive(Args)]
pub struct AblateArgs {
    /// Reference corpus; each model re-sings its lyrics under the
    /// references' own attribute classes.
    #[arg(long)]
    pub reference: PathBuf,
    /// A `label=path` checkpoint to compare; repeatable.
    #[arg(long = "model", required = true)]
    pub models: Vec<String>,
    /// Learned features to attach when a checkpoint uses them.
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Output path for the comparison table.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn ablate_cmd(run: &Effective, args: &AblateArgs) -> Result<(), CliError> {
    let reference = read_corpus(&args.reference)?;
    let features = match &args.features {
        Some(path) => Some(load_features(path)?.learned_map()),
        None => None,
    };

    let mut specs = Vec::new();
    for spec in &args.models {
        let (label, path) = spec
            .split_once('=')
            .ok_or_else(|| CliError::config(format!("--model wants label=path, got {spec:?}")))?;
        specs.push((label.to_string(), PathBuf::from(path)));
    }

    let mut rows = Vec::new();
    for (label, path) in &specs {
        let (ckpt, _) =
            Checkpoint::load(path).data_err(&format!("loading checkpoint {}", path.display()))?;
        let quantizer = ckpt
            .quantizer
            .as_ref()
            .ok_or_else(|| CliError::data(format!("checkpoint {label} has no quantizer")))?;
        if ckpt.config.flags.learned && features.is_none() {
            log::warn!("{label} expects learned features but none were given; using zeros");
        }

        let mut pairs: Vec<(SongRecord, &SongRecord)> = Vec::new();
        let mut failures = 0usize;
        for (i, song) in reference.iter().enumerate() {
            // Steer with the reference's own quantized attribute classes so
            // the comparison isolates the conditioning pathway.
            let mut classes = Vec::with_capacity(song.num_sentences());
            for sentence in &song.sentences {
                let values = compute_attributes(sentence)
                    .data_err(&format!("measuring attributes of {}", song.id))?;
                classes.push(quantizer.quantize(&values));
            }
            let learned_rows = match (&features, ckpt.config.flags.learned) {
                (Some(map), true) => map.get(&song.id),
                _ => None,
            };
            let request = request_from_song(
                song,
                song.id.clone(),
                |s| {
                    AttrId::ALL
                        .iter()
                        .map(|a| (a.name().to_string(), ClassSpec::Class(classes[s].get(*a))))
                        .collect()
                },
                learned_rows,
            );
            let result = resolve_request(&request, &ckpt.config, &ckpt.vocab, quantizer, ToneTable::bundled())
                .and_then(|resolved| {
                    let mut sampling = run.sampling;
                    sampling.seed = mix_seed(run.seed, [0, 0, i as u64]);
                    generate(&ckpt.params, &ckpt.config, &resolved.cond, &resolved.lyrics, &resolved.tags, &sampling)
                });
            match result {
                Ok(out) => {
                    debug_assert!(validate_song(&out.song).is_empty());
                    pairs.push((out.song, song));
                }
                Err(e) => {
                    failures += 1;
                    log::warn!("{label}: song {} failed: {e}", song.id);
                }
            }
        }
        if pairs.is_empty() {
            return Err(CliError::runtime(format!("{label}: every generation failed")));
        }
        if failures > 0 {
            log::warn!("{label}: {failures}/{} songs failed and were skipped", reference.len());
        }
        let borrowed: Vec<(&SongRecord, &SongRecord)> =
            pairs.iter().map(|(g, r)| (g, *r)).collect();
        let report = evaluate_pairs(&borrowed).data_err("computing metrics")?;
        rows.push(AblationRow { label: label.clone(), report });
    }

    let table = ablation_table(&rows);
    print!("{table}");
    if let Some(path) = &args.out {
        std::fs::write(path, &table).runtime_err("writing table")?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
