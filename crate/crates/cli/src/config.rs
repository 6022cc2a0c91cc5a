//! The run configuration: one optional TOML file that pins every stage's
//! hyperparameters, found via `--config` or the `L2M_CONFIG` env var.
//!
//! Every section is optional; missing sections resolve to the library
//! defaults. A master `seed` (the `--seed` flag beats the file's value)
//! overwrites the per-stage seeds so one number reproduces a whole run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use l2m_core::model::{ModelConfig, SamplingParams, TrainConfig};
use l2m_core::score::{AttributeTargets, CorpusSpec};
use l2m_core::vq::{VqConfig, VqTrainConfig};

use crate::error::{Classify, CliError};

pub const CONFIG_ENV: &str = "L2M_CONFIG";

/// Synthetic-corpus settings minus the count and seed, which come from the
/// command line and the master seed.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub sentences_per_song: Option<(usize, usize)>,
    pub syllables_per_sentence: Option<(usize, usize)>,
    pub targets: Option<AttributeTargets>,
}

impl SynthSection {
    pub fn spec(&self, num_songs: usize, seed: u64) -> CorpusSpec {
        let mut spec = CorpusSpec::new(num_songs, seed);
        if let Some(range) = self.sentences_per_song {
            spec.sentences_per_song = range;
        }
        if let Some(range) = self.syllables_per_sentence {
            spec.syllables_per_sentence = range;
        }
        if let Some(targets) = &self.targets {
            spec.targets = targets.clone();
        }
        spec
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RunConfig {
    seed: Option<u64>,
    model: Option<ModelConfig>,
    train: Option<TrainConfig>,
    vq: Option<VqConfig>,
    vq_train: Option<VqTrainConfig>,
    sampling: Option<SamplingParams>,
    synth: Option<SynthSection>,
}

/// The fully resolved configuration every command runs against.
#[derive(Debug, Clone, Serialize)]
pub struct Effective {
    pub seed: u64,
    /// True when the seed came from `--seed` (commands may use this to
    /// override seeds embedded in request files).
    #[serde(skip)]
    pub seed_from_flag: bool,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub vq: VqConfig,
    pub vq_train: VqTrainConfig,
    pub sampling: SamplingParams,
    pub synth: SynthSection,
}

impl Effective {
    /// Writes the resolved configuration into `dir/config.toml` so every
    /// run directory records exactly what produced it.
    pub fn echo(&self, dir: &Path) -> Result<PathBuf, CliError> {
        let text = toml::to_string_pretty(self)
            .map_err(|e| CliError::runtime(format!("serializing effective config: {e}")))?;
        let path = dir.join("config.toml");
        std::fs::write(&path, text).runtime_err("writing config.toml")?;
        Ok(path)
    }
}

/// Loads the config file (flag first, then `L2M_CONFIG`, then built-in
/// defaults), validates it, and resolves the master seed.
pub fn load(flag: Option<&Path>, seed_flag: Option<u64>) -> Result<Effective, CliError> {
    let path: Option<PathBuf> = flag
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from));

    let raw: RunConfig = match &path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .config_err(&format!("reading config {}", p.display()))?;
            toml::from_str(&text).config_err(&format!("parsing config {}", p.display()))?
        }
        None => RunConfig::default(),
    };

    let seed = seed_flag.or(raw.seed);
    let mut effective = Effective {
        seed: seed.unwrap_or(0),
        seed_from_flag: seed_flag.is_some(),
        model: raw.model.unwrap_or_else(ModelConfig::full),
        train: raw.train.unwrap_or_default(),
        vq: raw.vq.unwrap_or_else(VqConfig::full),
        vq_train: raw.vq_train.unwrap_or_default(),
        sampling: raw.sampling.unwrap_or_default(),
        synth: raw.synth.unwrap_or_default(),
    };

    effective.model.validate().map_err(CliError::config)?;
    effective.vq.validate().map_err(CliError::config)?;

    // A master seed, when given, governs every stage.
    if let Some(s) = seed {
        effective.train.seed = s;
        effective.vq_train.seed = s;
        effective.sampling.seed = s;
    }
    Ok(effective)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_config(text: &str) -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, text).unwrap();
        (dir, path)
    }

    #[test]
    fn defaults_resolve_without_a_file() {
        std::env::remove_var(CONFIG_ENV);
        let run = load(None, None).unwrap();
        assert_eq!(run.seed, 0);
        assert!(!run.seed_from_flag);
        assert_eq!(run.model, ModelConfig::full());
    }

    #[test]
    fn flag_seed_beats_file_seed_and_governs_stages() {
        let (_dir, path) = write_config("seed = 11\n\n[train]\nsteps = 9\n");
        let run = load(Some(&path), Some(4)).unwrap();
        assert_eq!(run.seed, 4);
        assert!(run.seed_from_flag);
        assert_eq!(run.train.seed, 4);
        assert_eq!(run.vq_train.seed, 4);
        assert_eq!(run.sampling.seed, 4);
        // the rest of the section still applies
        assert_eq!(run.train.steps, 9);

        let run = load(Some(&path), None).unwrap();
        assert_eq!(run.seed, 11);
        assert!(!run.seed_from_flag);
        assert_eq!(run.train.seed, 11);
    }

    #[test]
    fn unknown_keys_and_invalid_models_are_config_errors() {
        let (_dir, path) = write_config("sede = 1\n");
        assert_eq!(load(Some(&path), None).unwrap_err().code(), 2);

        let (_dir, path) = write_config(
            "[model]\nlayers = 1\nheads = 3\nd_model = 16\nd_ff = 32\nd_lyric = 8\nd_attr = 2\n\
             num_classes = 4\nmax_tokens = 64\nmax_lyric = 16\n\
             [model.flags]\ntags = true\nattrs = true\nlearned = false\n",
        );
        let err = load(Some(&path), None).unwrap_err();
        assert_eq!(err.code(), 2);
        assert!(err.inner().to_string().contains("divisible"), "{}", err.inner());
    }

    #[test]
    fn synth_section_overrides_only_what_it_names() {
        let (_dir, path) = write_config("[synth]\nsentences_per_song = [3, 3]\n");
        let run = load(Some(&path), Some(5)).unwrap();
        let spec = run.synth.spec(10, run.seed);
        assert_eq!(spec.sentences_per_song, (3, 3));
        assert_eq!(spec.syllables_per_sentence, CorpusSpec::new(1, 0).syllables_per_sentence);
        assert_eq!(spec.seed, 5);
    }
}
