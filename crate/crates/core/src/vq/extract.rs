//! Feature extraction: run the trained encoder + codebook over a corpus and
//! write one quantized latent per sentence, in a line-oriented text format
//! that records which checkpoint produced it.

use std::collections::BTreeMap;

use super::net::encode_sentence_latent;
use super::quantize::quantize_grouped;
use super::{VqConfig, VqError};
use crate::nn::{Graph, ParamStore};
use crate::remi::{encode_ids, tokenize_sentence};
use crate::score::{SentenceRecord, SongRecord};

/// One sentence's learned feature: the chosen code per group and the
/// quantized latent (the concatenation of those codebook rows).
#[derive(Debug, Clone, PartialEq)]
pub struct SentenceFeature {
    pub codes: Vec<usize>,
    pub vector: Vec<f64>,
}

/// Learned features for a corpus, tagged with the checkpoint that made them.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    /// Payload hash of the VQ checkpoint used for extraction.
    pub checkpoint: String,
    pub groups: usize,
    pub d_latent: usize,
    /// Song id → per-sentence features, in sentence order.
    pub songs: BTreeMap<String, Vec<SentenceFeature>>,
}

impl FeatureSet {
    /// The per-song learned-condition vectors consumed by model training.
    pub fn learned_map(&self) -> BTreeMap<String, Vec<Vec<f64>>> {
        self.songs
            .iter()
            .map(|(id, feats)| (id.clone(), feats.iter().map(|f| f.vector.clone()).collect()))
            .collect()
    }
}

/// Encodes and quantizes one sentence.
pub fn sentence_feature(
    store: &ParamStore,
    cfg: &VqConfig,
    sentence: &SentenceRecord,
) -> Result<SentenceFeature, VqError> {
    let ids = encode_ids(&tokenize_sentence(sentence)?);
    if ids.len() > cfg.max_tokens {
        return Err(VqError::OverBudget { len: ids.len(), budget: cfg.max_tokens });
    }
    let mut g = Graph::new();
    let z = encode_sentence_latent(&mut g, store, cfg, &ids);
    let z_vals = g.value(z).row(0).to_vec();
    let (codes, vector) = quantize_grouped(&z_vals, store.get("vq.codebook"), cfg.groups);
    Ok(SentenceFeature { codes, vector })
}

/// Extracts features for every sentence of every song.
pub fn extract_features(
    store: &ParamStore,
    cfg: &VqConfig,
    songs: &[SongRecord],
    checkpoint: &str,
) -> Result<FeatureSet, VqError> {
    let mut out = BTreeMap::new();
    for song in songs {
        let mut feats = Vec::with_capacity(song.sentences.len());
        for sentence in &song.sentences {
            feats.push(sentence_feature(store, cfg, sentence)?);
        }
        out.insert(song.id.clone(), feats);
    }
    Ok(FeatureSet {
        checkpoint: checkpoint.to_string(),
        groups: cfg.groups,
        d_latent: cfg.d_latent,
        songs: out,
    })
}

/// Renders a feature set as text. Floats use the shortest representation
/// that parses back to the identical value, so format → parse is exact.
pub fn format_features(set: &FeatureSet) -> String {
    let mut out = String::new();
    out.push_str("# vq-features v1\n");
    out.push_str(&format!("# checkpoint {}\n", set.checkpoint));
    out.push_str(&format!("# groups {} latent {}\n", set.groups, set.d_latent));
    for (id, feats) in &set.songs {
        out.push_str(&format!("song {id}\n"));
        for (idx, f) in feats.iter().enumerate() {
            let codes: Vec<String> = f.codes.iter().map(|c| c.to_string()).collect();
            let vals: Vec<String> = f.vector.iter().map(|v| v.to_string()).collect();
            out.push_str(&format!(
                "sentence {idx} codes {} vector {}\n",
                codes.join(","),
                vals.join(",")
            ));
        }
    }
    out
}

fn parse_err(line: usize, msg: impl Into<String>) -> VqError {
    VqError::Parse(format!("line {}: {}", line + 1, msg.into()))
}

/// Parses the output of [`format_features`], validating widths and ordering.
pub fn parse_features(text: &str) -> Result<FeatureSet, VqError> {
    let mut lines = text.lines().enumerate();
    let expect_header = |got: Option<(usize, &str)>, want: &str| -> Result<String, VqError> {
        match got {
            Some((_, line)) if line.starts_with(want) => Ok(line[want.len()..].trim().to_string()),
            Some((i, line)) => Err(parse_err(i, format!("expected `{want}…`, got `{line}`"))),
            None => Err(VqError::Parse(format!("missing header `{want}…`"))),
        }
    };
    let magic = expect_header(lines.next(), "# vq-features")?;
    if magic != "v1" {
        return Err(VqError::Parse(format!("unsupported feature version `{magic}`")));
    }
    let checkpoint = expect_header(lines.next(), "# checkpoint")?;
    let dims = expect_header(lines.next(), "# groups")?;
    let dims: Vec<&str> = dims.split_whitespace().collect();
    let (groups, d_latent) = match dims.as_slice() {
        [g, "latent", d] => (
            g.parse::<usize>().map_err(|e| VqError::Parse(format!("bad groups: {e}")))?,
            d.parse::<usize>().map_err(|e| VqError::Parse(format!("bad latent: {e}")))?,
        ),
        _ => return Err(VqError::Parse("malformed `# groups G latent D` header".into())),
    };

    let mut songs: BTreeMap<String, Vec<SentenceFeature>> = BTreeMap::new();
    let mut current: Option<String> = None;
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        if let Some(id) = line.strip_prefix("song ") {
            let id = id.trim().to_string();
            if songs.contains_key(&id) {
                return Err(parse_err(i, format!("duplicate song `{id}`")));
            }
            songs.insert(id.clone(), Vec::new());
            current = Some(id);
        } else if let Some(rest) = line.strip_prefix("sentence ") {
            let song = current.as_ref().ok_or_else(|| parse_err(i, "sentence before any song"))?;
            let parts: Vec<&str> = rest.split_whitespace().collect();
            let [idx, "codes", codes, "vector", vector] = parts.as_slice() else {
                return Err(parse_err(i, "expected `sentence N codes a,b vector x,y`"));
            };
            let feats = songs.get_mut(song).unwrap();
            let idx: usize =
                idx.parse().map_err(|e| parse_err(i, format!("bad sentence index: {e}")))?;
            if idx != feats.len() {
                return Err(parse_err(i, format!("sentence {idx} out of order (expected {})", feats.len())));
            }
            let codes = codes
                .split(',')
                .map(|c| c.parse::<usize>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| parse_err(i, format!("bad code: {e}")))?;
            if codes.len() != groups {
                return Err(parse_err(i, format!("{} codes for {groups} groups", codes.len())));
            }
            let vector = vector
                .split(',')
                .map(|v| v.parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| parse_err(i, format!("bad value: {e}")))?;
            if vector.len() != d_latent {
                return Err(parse_err(i, format!("vector width {} ≠ latent {d_latent}", vector.len())));
            }
            feats.push(SentenceFeature { codes, vector });
        } else {
            return Err(parse_err(i, format!("unrecognized line `{line}`")));
        }
    }
    Ok(FeatureSet { checkpoint, groups, d_latent, songs })
}
