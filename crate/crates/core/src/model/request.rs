//! Generation requests: the user-facing JSON schema and its resolution into
//! the model's condition inputs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::condition::{SentenceCond, SongCond};
use super::config::ModelConfig;
use super::infer::SamplingParams;
use super::vocab::LyricVocab;
use super::ModelError;
use crate::attributes::{AttrId, QuantizerModel, NUM_ATTRIBUTES};
use crate::lyric::{annotate_tones, expand_pos_to_syllables, ToneTable};
use crate::remi::{LyricSheet, SentenceLyric, SongTags};
use crate::score::{WordSpan, NUM_EMOTIONS, NUM_KEYS, NUM_STRUCTURES, NUM_TONES};

/// Either an explicit quantizer class or `"auto"`, which resolves to the
/// class of the corpus median for that attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ClassSpec {
    Class(usize),
    Keyword(String),
}

impl Default for ClassSpec {
    fn default() -> ClassSpec {
        ClassSpec::Keyword("auto".to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RequestSentence {
    /// Syllable texts, one entry per sung syllable.
    pub syllables: Vec<String>,
    /// Tone class per syllable; omitted entries resolve via the tone table.
    #[serde(default)]
    pub tones: Option<Vec<u8>>,
    /// Word spans with POS tags; empty means one untagged word.
    #[serde(default)]
    pub words: Vec<WordSpan>,
    #[serde(default)]
    pub structure: u8,
    /// Per-attribute class or `"auto"`; missing attributes are auto.
    #[serde(default)]
    pub attributes: BTreeMap<String, ClassSpec>,
    /// Learned melody feature for this sentence (width `d_lyric`).
    #[serde(default)]
    pub learned: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationRequest {
    pub id: String,
    pub key: u8,
    pub emotion: u8,
    pub bpm: f64,
    pub sentences: Vec<RequestSentence>,
    #[serde(default)]
    pub sampling: SamplingParams,
}

impl GenerationRequest {
    pub fn from_json(text: &str) -> Result<GenerationRequest, ModelError> {
        Ok(serde_json::from_str(text)?)
    }
}

/// A request resolved against the vocab, tone table, and quantizer:
/// everything [`super::generate`] needs.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedRequest {
    pub cond: SongCond,
    pub lyrics: LyricSheet,
    pub tags: SongTags,
    pub sampling: SamplingParams,
}

fn bad(msg: String) -> ModelError {
    ModelError::BadRequest(msg)
}

pub fn resolve_request(
    req: &GenerationRequest,
    cfg: &ModelConfig,
    vocab: &LyricVocab,
    quantizer: &QuantizerModel,
    table: &ToneTable,
) -> Result<ResolvedRequest, ModelError> {
    if req.sentences.is_empty() {
        return Err(bad("request has no sentences".into()));
    }
    if req.key >= NUM_KEYS {
        return Err(bad(format!("key {} out of range 0..{NUM_KEYS}", req.key)));
    }
    if req.emotion >= NUM_EMOTIONS {
        return Err(bad(format!("emotion {} out of range 0..{NUM_EMOTIONS}", req.emotion)));
    }
    if !(req.bpm.is_finite() && req.bpm > 0.0) {
        return Err(bad(format!("bpm must be positive and finite, got {}", req.bpm)));
    }
    if quantizer.k != cfg.num_classes {
        return Err(bad(format!("quantizer has {} classes, model expects {}", quantizer.k, cfg.num_classes)));
    }

    let mut sentences = Vec::with_capacity(req.sentences.len());
    let mut sheet = Vec::with_capacity(req.sentences.len());
    for (i, s) in req.sentences.iter().enumerate() {
        let n = s.syllables.len();
        if n == 0 {
            return Err(bad(format!("sentence {i} has no syllables")));
        }
        if n + 1 > cfg.max_lyric {
            return Err(bad(format!("sentence {i}: {n} syllables over the encoder budget {}", cfg.max_lyric)));
        }
        if s.structure >= NUM_STRUCTURES {
            return Err(bad(format!("sentence {i}: structure {} out of range 0..{NUM_STRUCTURES}", s.structure)));
        }

        let tones: Vec<u8> = match &s.tones {
            Some(t) => {
                if t.len() != n {
                    return Err(bad(format!("sentence {i}: {} tones for {n} syllables", t.len())));
                }
                if let Some(&badtone) = t.iter().find(|&&c| c >= NUM_TONES) {
                    return Err(bad(format!("sentence {i}: tone class {badtone} out of range 0..{NUM_TONES}")));
                }
                t.clone()
            }
            None => {
                annotate_tones(s.syllables.iter().map(|text| (text.as_str(), None)), table)
                    .map_err(|e| bad(format!("sentence {i}: {e}")))?
                    .classes
            }
        };

        let words = if s.words.is_empty() {
            vec![WordSpan { start: 0, end: n - 1, pos: 0 }]
        } else {
            s.words.clone()
        };
        let pos = expand_pos_to_syllables(&words, n).map_err(|e| bad(format!("sentence {i}: {e}")))?;

        let mut attr_classes = [0usize; NUM_ATTRIBUTES];
        for (slot, attr) in attr_classes.iter_mut().zip(AttrId::ALL) {
            *slot = quantizer.median_class[attr.index()];
        }
        for (name, spec) in &s.attributes {
            let attr = AttrId::from_name(name)
                .ok_or_else(|| bad(format!("sentence {i}: unknown attribute {name:?}")))?;
            match spec {
                ClassSpec::Class(c) => {
                    if *c >= cfg.num_classes {
                        return Err(bad(format!(
                            "sentence {i}: {name} class {c} out of range 0..{}",
                            cfg.num_classes
                        )));
                    }
                    attr_classes[attr.index()] = *c;
                }
                ClassSpec::Keyword(word) if word == "auto" => {}
                ClassSpec::Keyword(word) => {
                    return Err(bad(format!("sentence {i}: {name} must be a class or \"auto\", got {word:?}")));
                }
            }
        }

        if let Some(f) = &s.learned {
            if f.len() != cfg.d_lyric {
                return Err(bad(format!(
                    "sentence {i}: learned feature has {} values, model wants {}",
                    f.len(),
                    cfg.d_lyric
                )));
            }
            if f.iter().any(|v| !v.is_finite()) {
                return Err(bad(format!("sentence {i}: learned feature has non-finite values")));
            }
        }

        sentences.push(SentenceCond {
            lyric_ids: vocab.ids(s.syllables.iter().map(String::as_str)),
            tone_ids: tones.iter().map(|&t| t as usize).collect(),
            pos_ids: pos.iter().map(|&p| p as usize).collect(),
            structure: s.structure as usize,
            attr_classes,
            learned: s.learned.clone(),
        });
        sheet.push(SentenceLyric {
            structure: s.structure,
            syllables: s.syllables.iter().cloned().zip(tones).collect(),
            words,
        });
    }

    Ok(ResolvedRequest {
        cond: SongCond { key: req.key as usize, emotion: req.emotion as usize, sentences },
        lyrics: LyricSheet { sentences: sheet },
        tags: SongTags { id: req.id.clone(), key: req.key, emotion: req.emotion, bpm: req.bpm },
        sampling: req.sampling,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attributes::fit_quantizer;
    use crate::score::{gen_synthetic, CorpusSpec};

    fn fixtures() -> (ModelConfig, LyricVocab, QuantizerModel) {
        let corpus = gen_synthetic(&CorpusSpec::new(3, 77)).unwrap();
        let mut cfg = ModelConfig::toy();
        cfg.num_classes = 8;
        cfg.d_lyric = 4;
        (cfg.clone(), LyricVocab::from_corpus(&corpus), fit_quantizer(&corpus, cfg.num_classes).unwrap())
    }

    fn demo_json() -> String {
        r#"{
            "id": "demo",
            "key": 2,
            "emotion": 1,
            "bpm": 96,
            "sentences": [
                {
                    "syllables": ["春", "风", "来"],
                    "structure": 1,
                    "attributes": {"PM": 3, "ND": "auto"}
                },
                {
                    "syllables": ["月", "落"],
                    "tones": [3, 3],
                    "words": [{"start": 0, "end": 1, "pos": 7}]
                }
            ],
            "sampling": {"temperature": 0.8, "top_p": 0.95, "seed": 11, "max_tokens": 256}
        }"#
        .to_string()
    }

    #[test]
    fn parses_and_resolves_the_demo_request() {
        let (cfg, vocab, quantizer) = fixtures();
        let req = GenerationRequest::from_json(&demo_json()).unwrap();
        let resolved = resolve_request(&req, &cfg, &vocab, &quantizer, ToneTable::bundled()).unwrap();
        assert_eq!(resolved.cond.sentences.len(), 2);
        // explicit class kept, autos filled with the median class
        let s0 = &resolved.cond.sentences[0];
        assert_eq!(s0.attr_classes[AttrId::Pm.index()], 3);
        assert_eq!(s0.attr_classes[AttrId::Nd.index()], quantizer.median_class[AttrId::Nd.index()]);
        // bundled table tones: 春 and 风 are class 0, 来 is class 1
        assert_eq!(s0.tone_ids, vec![0, 0, 1]);
        // sentence 2 used explicit tones and a tagged word
        assert_eq!(resolved.cond.sentences[1].tone_ids, vec![3, 3]);
        assert_eq!(resolved.cond.sentences[1].pos_ids, vec![7, 7]);
        assert_eq!(resolved.sampling.seed, 11);
        assert_eq!(resolved.tags.bpm, 96.0);
    }

    #[test]
    fn unknown_attribute_and_bad_class_are_rejected() {
        let (cfg, vocab, quantizer) = fixtures();
        let mut req = GenerationRequest::from_json(&demo_json()).unwrap();
        req.sentences[0].attributes.insert("XX".into(), ClassSpec::Class(0));
        let err = resolve_request(&req, &cfg, &vocab, &quantizer, ToneTable::bundled()).unwrap_err();
        assert!(err.to_string().contains("unknown attribute"), "{err}");

        let mut req = GenerationRequest::from_json(&demo_json()).unwrap();
        req.sentences[0].attributes.insert("PM".into(), ClassSpec::Class(99));
        let err = resolve_request(&req, &cfg, &vocab, &quantizer, ToneTable::bundled()).unwrap_err();
        assert!(err.to_string().contains("out of range"), "{err}");
    }

    #[test]
    fn unknown_syllable_without_tone_is_an_error() {
        let (cfg, vocab, quantizer) = fixtures();
        let mut req = GenerationRequest::from_json(&demo_json()).unwrap();
        req.sentences[0].syllables[0] = "zz".into();
        let err = resolve_request(&req, &cfg, &vocab, &quantizer, ToneTable::bundled()).unwrap_err();
        assert!(err.to_string().contains("zz"), "{err}");
    }

    #[test]
    fn learned_width_is_checked() {
        let (mut cfg, vocab, quantizer) = fixtures();
        cfg.flags.learned = true;
        let mut req = GenerationRequest::from_json(&demo_json()).unwrap();
        req.sentences[0].learned = Some(vec![1.0; 3]); // d_lyric is 4
        let err = resolve_request(&req, &cfg, &vocab, &quantizer, ToneTable::bundled()).unwrap_err();
        assert!(err.to_string().contains("learned feature"), "{err}");
    }
}
