//! End-to-end tests driving the `l2m` binary exactly as a user would.

use std::path::Path;
use std::process::{Command, Output};

use l2m_core::score::load_corpus;

const SMALL_CONFIG: &str = r#"
seed = 7

[model]
layers = 2
heads = 2
d_model = 32
d_ff = 64
d_lyric = 16
d_attr = 4
num_classes = 4
max_tokens = 1024
max_lyric = 64

[model.flags]
tags = true
attrs = true
learned = false

[train]
steps = 3
batch_size = 2
log_every = 10

[vq]
layers = 1
heads = 2
d_model = 16
d_ff = 32
d_latent = 16
groups = 4
codebook_size = 8
beta = 0.25
max_tokens = 512

[vq_train]
steps = 3
batch_size = 2

[sampling]
temperature = 1.0
top_p = 0.9
max_tokens = 512
"#;

fn l2m(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_l2m"))
        .args(args)
        .current_dir(dir)
        .env_remove("L2M_CONFIG")
        .output()
        .expect("spawning l2m")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = l2m(dir, args);
    assert!(
        out.status.success(),
        "l2m {args:?} failed with {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).expect("utf-8 stdout")
}

fn fails_with(dir: &Path, args: &[&str], code: i32) -> String {
    let out = l2m(dir, args);
    assert_eq!(
        out.status.code(),
        Some(code),
        "l2m {args:?} should exit {code}\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), SMALL_CONFIG).unwrap();
    dir
}

#[test]
fn pipeline_from_synthesis_to_midi() {
    let dir = setup();
    let root = dir.path();

    let out = ok(root, &["synth", "--songs", "6", "--out", "corpus.jsonl", "--config", "run.toml"]);
    assert!(out.contains("wrote 6 songs"), "{out}");

    let out = ok(root, &["ingest", "--in", "corpus.jsonl"]);
    assert!(out.contains("6 songs"), "{out}");

    let out = ok(root, &["tokenize", "--in", "corpus.jsonl", "--check-roundtrip"]);
    assert!(out.contains("round trip ok: 6/6"), "{out}");

    ok(root, &["fit-quantizer", "--in", "corpus.jsonl", "--out", "quant.txt", "--config", "run.toml"]);

    let out = ok(
        root,
        &["train", "--in", "corpus.jsonl", "--quantizer", "quant.txt", "--out", "run", "--config", "run.toml"],
    );
    assert!(out.contains("trained 3 steps"), "{out}");
    assert!(root.join("run/model.ckpt").exists());
    assert!(root.join("run/stats.csv").exists());
    assert!(root.join("run/config.toml").exists());

    // a request re-singing the first two sentences of the corpus
    let corpus = load_corpus(root.join("corpus.jsonl")).unwrap();
    let sentences: Vec<serde_json::Value> = corpus[0]
        .sentences
        .iter()
        .map(|s| {
            serde_json::json!({
                "syllables": s.syllables.iter().map(|syl| syl.text.clone()).collect::<Vec<_>>(),
                "tones": s.syllables.iter().map(|syl| syl.tone).collect::<Vec<_>>(),
                "structure": s.structure,
                "attributes": {"PM": 2},
            })
        })
        .collect();
    let request = serde_json::json!({
        "id": corpus[0].id,
        "key": corpus[0].key,
        "emotion": corpus[0].emotion,
        "bpm": corpus[0].bpm,
        "sentences": sentences,
        "sampling": {"seed": 3, "max_tokens": 512},
    });
    std::fs::write(root.join("req.json"), serde_json::to_string_pretty(&request).unwrap()).unwrap();

    let out = ok(
        root,
        &["generate", "--checkpoint", "run/model.ckpt", "--request", "req.json", "--out", "gen", "--midi"],
    );
    assert!(out.contains("generated"), "{out}");
    let generated = load_corpus(root.join("gen/song.jsonl")).unwrap();
    assert_eq!(generated[0].id, corpus[0].id);
    assert_eq!(generated[0].num_syllables(), corpus[0].num_syllables());
    assert!(root.join(format!("gen/{}.mid", corpus[0].id)).exists());
    assert!(root.join("gen/tokens.txt").exists());

    // the generated song scores against its reference
    let out = ok(
        root,
        &["evaluate", "--generated", "gen/song.jsonl", "--reference", "corpus.jsonl", "--out", "eval"],
    );
    assert!(out.contains("mean"), "{out}");
    assert!(root.join("eval/report.json").exists());

    // a corpus against itself is a perfect match
    let out = ok(root, &["evaluate", "--generated", "corpus.jsonl", "--reference", "corpus.jsonl"]);
    let mean = out.lines().find(|l| l.starts_with("mean")).expect("mean row");
    assert!(mean.contains("100.00") && mean.contains("0.000"), "{mean}");

    let out = ok(root, &["export-midi", "--in", "corpus.jsonl", "--out", "midis"]);
    assert!(out.contains("wrote 6 MIDI files"), "{out}");
    assert!(root.join(format!("midis/{}.mid", corpus[0].id)).exists());
}

#[test]
fn learned_feature_pipeline_and_ablation() {
    let dir = setup();
    let root = dir.path();

    ok(root, &["synth", "--songs", "5", "--out", "corpus.jsonl", "--config", "run.toml"]);
    let out = ok(root, &["train-vq", "--in", "corpus.jsonl", "--out", "vqrun", "--config", "run.toml"]);
    assert!(out.contains("trained 3 steps"), "{out}");

    let out = ok(
        root,
        &["extract-features", "--checkpoint", "vqrun/vq.ckpt", "--in", "corpus.jsonl", "--out", "feats.txt"],
    );
    assert!(out.contains("encoded"), "{out}");
    let feats = std::fs::read_to_string(root.join("feats.txt")).unwrap();
    assert!(feats.starts_with("# vq-features v1"), "{feats}");

    // the learned-feature model trains on the extracted vectors
    ok(
        root,
        &[
            "train", "--in", "corpus.jsonl", "--features", "feats.txt", "--out", "run-learned",
            "--config", "run.toml",
        ],
    );
    ok(root, &["train", "--in", "corpus.jsonl", "--out", "run-base", "--config", "run.toml"]);

    let out = ok(
        root,
        &[
            "ablate", "--reference", "corpus.jsonl", "--model", "base=run-base/model.ckpt",
            "--model", "learned=run-learned/model.ckpt", "--features", "feats.txt",
            "--out", "ablation.txt", "--config", "run.toml",
        ],
    );
    assert!(out.contains("base") && out.contains("learned"), "{out}");
    let table = std::fs::read_to_string(root.join("ablation.txt")).unwrap();
    assert_eq!(table.lines().count(), 3, "{table}");

    let out = ok(
        root,
        &[
            "controllability", "--checkpoint", "run-base/model.ckpt", "--in", "corpus.jsonl",
            "--attrs", "PM,ND", "--probes", "3", "--repeats", "1", "--out", "sweep.csv",
            "--config", "run.toml",
        ],
    );
    assert!(out.starts_with("swept,PM,"), "{out}");
    let csv = std::fs::read_to_string(root.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3, "{csv}");
}

#[test]
fn synthesis_is_byte_identical_for_a_seed() {
    let dir = setup();
    let root = dir.path();
    ok(root, &["synth", "--songs", "4", "--out", "a.jsonl", "--seed", "21"]);
    ok(root, &["synth", "--songs", "4", "--out", "b.jsonl", "--seed", "21"]);
    let a = std::fs::read(root.join("a.jsonl")).unwrap();
    let b = std::fs::read(root.join("b.jsonl")).unwrap();
    assert_eq!(a, b);

    ok(root, &["synth", "--songs", "4", "--out", "c.jsonl", "--seed", "22"]);
    let c = std::fs::read(root.join("c.jsonl")).unwrap();
    assert_ne!(a, c);
}

#[test]
fn exit_codes_distinguish_failure_kinds() {
    let dir = setup();
    let root = dir.path();

    // clap usage error: missing required flag
    fails_with(root, &["generate", "--checkpoint", "x.ckpt"], 2);

    // config error: unknown key in the config file
    std::fs::write(root.join("bad.toml"), "sede = 1\n").unwrap();
    let err = fails_with(root, &["ingest", "--in", "whatever.jsonl", "--config", "bad.toml"], 2);
    assert!(err.contains("bad.toml"), "{err}");

    // data error: malformed corpus
    std::fs::write(root.join("broken.jsonl"), "{\"id\": \"x\", nope\n").unwrap();
    let err = fails_with(root, &["ingest", "--in", "broken.jsonl"], 3);
    assert!(err.contains("broken.jsonl"), "{err}");

    // data error: unmatched ids in evaluation
    ok(root, &["synth", "--songs", "2", "--out", "a.jsonl", "--seed", "1"]);
    ok(root, &["synth", "--songs", "2", "--out", "b.jsonl", "--seed", "2"]);
    let err = fails_with(root, &["evaluate", "--generated", "a.jsonl", "--reference", "b.jsonl"], 3);
    assert!(err.contains("no reference"), "{err}");
}

#[test]
fn config_comes_from_the_environment_when_no_flag() {
    let dir = setup();
    let root = dir.path();
    std::fs::write(root.join("env.toml"), "sede = 1\n").unwrap();

    let out = Command::new(env!("CARGO_BIN_EXE_l2m"))
        .args(["synth", "--songs", "1", "--out", "x.jsonl"])
        .current_dir(root)
        .env("L2M_CONFIG", root.join("env.toml"))
        .output()
        .expect("spawning l2m");
    assert_eq!(out.status.code(), Some(2), "env config should be loaded and rejected");

    // the --config flag wins over the environment
    let out = Command::new(env!("CARGO_BIN_EXE_l2m"))
        .args(["synth", "--songs", "1", "--out", "x.jsonl", "--config", "run.toml"])
        .current_dir(root)
        .env("L2M_CONFIG", root.join("env.toml"))
        .output()
        .expect("spawning l2m");
    assert!(out.status.success(), "flag should beat env: {}", String::from_utf8_lossy(&out.stderr));
}
