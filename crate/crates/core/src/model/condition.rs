//! Assembly of the per-syllable condition matrix.

use std::ops::Range;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::encoder::encode_sentence_node;
use super::layers::INIT_SCALE;
use crate::attributes::NUM_ATTRIBUTES;
use crate::nn::{Graph, NodeId, ParamStore, Tensor};
use crate::score::{NUM_EMOTIONS, NUM_KEYS, NUM_POS_TAGS, NUM_STRUCTURES, NUM_TONES};

/// Everything the condition builder needs for one sentence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceCond {
    /// Lyric-vocab id per syllable (for the semantic encoder).
    pub lyric_ids: Vec<usize>,
    /// Tone class per syllable.
    pub tone_ids: Vec<usize>,
    /// POS tag per syllable (the covering word's tag).
    pub pos_ids: Vec<usize>,
    pub structure: usize,
    pub attr_classes: [usize; NUM_ATTRIBUTES],
    /// Learned melody feature, `d_lyric` wide; `None` means a zero block.
    pub learned: Option<Vec<f64>>,
}

impl SentenceCond {
    pub fn num_syllables(&self) -> usize {
        self.lyric_ids.len()
    }
}

/// Song-level condition inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SongCond {
    pub key: usize,
    pub emotion: usize,
    pub sentences: Vec<SentenceCond>,
}

impl SongCond {
    pub fn num_syllables(&self) -> usize {
        self.sentences.iter().map(SentenceCond::num_syllables).sum()
    }

    /// Syllable counts per sentence, as the token grammar wants them.
    pub fn syllable_counts(&self) -> Vec<usize> {
        self.sentences.iter().map(SentenceCond::num_syllables).collect()
    }
}

/// Named column ranges of the condition vector, in assembly order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConditionBlock {
    pub name: &'static str,
    pub range: Range<usize>,
}

/// The fixed column layout: lyric, key, emotion, structure, the twelve
/// attributes, learned feature.
pub fn condition_layout(cfg: &ModelConfig) -> Vec<ConditionBlock> {
    let mut blocks = Vec::new();
    let mut at = 0;
    let mut push = |name: &'static str, width: usize, at: &mut usize| {
        blocks.push(ConditionBlock { name, range: *at..*at + width });
        *at += width;
    };
    push("lyric", cfg.d_lyric, &mut at);
    push("key", cfg.d_attr, &mut at);
    push("emotion", cfg.d_attr, &mut at);
    push("structure", cfg.d_attr, &mut at);
    for attr in crate::attributes::AttrId::ALL {
        push(attr.name(), cfg.d_attr, &mut at);
    }
    push("learned", cfg.d_lyric, &mut at);
    debug_assert_eq!(at, cfg.d_cond());
    blocks
}

pub(crate) fn init_condition_params(store: &mut ParamStore, cfg: &ModelConfig, rng: &mut ChaCha8Rng) {
    store.init_uniform("cond.tone", NUM_TONES as usize, cfg.d_lyric, INIT_SCALE, rng);
    store.init_uniform("cond.pos", NUM_POS_TAGS as usize, cfg.d_lyric, INIT_SCALE, rng);
    store.init_uniform("cond.key", NUM_KEYS as usize, cfg.d_attr, INIT_SCALE, rng);
    store.init_uniform("cond.emotion", NUM_EMOTIONS as usize, cfg.d_attr, INIT_SCALE, rng);
    store.init_uniform("cond.structure", NUM_STRUCTURES as usize, cfg.d_attr, INIT_SCALE, rng);
    for attr in crate::attributes::AttrId::ALL {
        store.init_uniform(&format!("cond.attr.{}", attr.name()), cfg.num_classes, cfg.d_attr, INIT_SCALE, rng);
    }
}

/// Builds the `[total_syllables, d_cond]` condition matrix in-graph, so
/// training gradients reach the embeddings and the semantic encoder.
/// Blocks disabled in `cfg.flags` become exact zeros.
pub(crate) fn condition_rows_node(g: &mut Graph, store: &ParamStore, cfg: &ModelConfig, song: &SongCond) -> NodeId {
    assert!(!song.sentences.is_empty(), "condition: song has no sentences");
    let mut per_sentence = Vec::with_capacity(song.sentences.len());
    for s in &song.sentences {
        let n = s.num_syllables();
        assert!(n > 0, "condition: sentence has no syllables");
        assert_eq!(s.tone_ids.len(), n, "condition: tone/syllable count mismatch");
        assert_eq!(s.pos_ids.len(), n, "condition: pos/syllable count mismatch");

        let sem = encode_sentence_node(g, store, cfg, &s.lyric_ids);
        let sem_rows = g.gather_rows(sem, &vec![0; n]);
        let tone_table = g.param(store, "cond.tone");
        let tones = g.gather_rows(tone_table, &s.tone_ids);
        let pos_table = g.param(store, "cond.pos");
        let pos = g.gather_rows(pos_table, &s.pos_ids);
        let lyric = g.add(tones, pos);
        let lyric = g.add(lyric, sem_rows);

        let tags = if cfg.flags.tags {
            let key_table = g.param(store, "cond.key");
            let key = g.gather_rows(key_table, &vec![song.key; n]);
            let emo_table = g.param(store, "cond.emotion");
            let emotion = g.gather_rows(emo_table, &vec![song.emotion; n]);
            let struct_table = g.param(store, "cond.structure");
            let structure = g.gather_rows(struct_table, &vec![s.structure; n]);
            g.concat_cols(&[key, emotion, structure])
        } else {
            g.input(Tensor::zeros(n, 3 * cfg.d_attr))
        };

        let attrs = if cfg.flags.attrs {
            let mut cols = Vec::with_capacity(NUM_ATTRIBUTES);
            for (attr, &class) in crate::attributes::AttrId::ALL.iter().zip(&s.attr_classes) {
                assert!(class < cfg.num_classes, "condition: class {class} out of range for {}", attr.name());
                let table = g.param(store, &format!("cond.attr.{}", attr.name()));
                cols.push(g.gather_rows(table, &vec![class; n]));
            }
            g.concat_cols(&cols)
        } else {
            g.input(Tensor::zeros(n, NUM_ATTRIBUTES * cfg.d_attr))
        };

        let learned = match (&s.learned, cfg.flags.learned) {
            (Some(feat), true) => {
                assert_eq!(feat.len(), cfg.d_lyric, "condition: learned feature width");
                let row = g.input(Tensor::from_vec(1, cfg.d_lyric, feat.clone()));
                g.gather_rows(row, &vec![0; n])
            }
            _ => g.input(Tensor::zeros(n, cfg.d_lyric)),
        };

        per_sentence.push(g.concat_cols(&[lyric, tags, attrs, learned]));
    }
    g.concat_rows(&per_sentence)
}

#[cfg(test)]
mod tests {
    use super::super::config::ConditionFlags;
    use super::*;
    use rand::SeedableRng;

    fn tiny() -> ModelConfig {
        let mut cfg = ModelConfig::toy();
        cfg.layers = 1;
        cfg.d_model = 16;
        cfg.d_ff = 32;
        cfg.d_lyric = 8;
        cfg.d_attr = 2;
        cfg.num_classes = 4;
        cfg
    }

    fn demo_song() -> SongCond {
        SongCond {
            key: 5,
            emotion: 2,
            sentences: vec![
                SentenceCond {
                    lyric_ids: vec![2, 3],
                    tone_ids: vec![0, 4],
                    pos_ids: vec![7, 7],
                    structure: 1,
                    attr_classes: [0, 1, 2, 3, 0, 1, 2, 3, 0, 1, 2, 3],
                    learned: None,
                },
                SentenceCond {
                    lyric_ids: vec![4, 5, 6],
                    tone_ids: vec![1, 2, 3],
                    pos_ids: vec![0, 1, 2],
                    structure: 3,
                    attr_classes: [3; 12],
                    learned: Some(vec![9.0, 8.0, 7.0, 6.0, 5.0, 4.0, 3.0, 2.0]),
                },
            ],
        }
    }

    fn build(cfg: &ModelConfig, song: &SongCond) -> (ParamStore, Tensor) {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut store = ParamStore::new();
        super::super::encoder::init_encoder(&mut store, cfg, 10, &mut rng);
        init_condition_params(&mut store, cfg, &mut rng);
        let mut g = Graph::new();
        let rows = condition_rows_node(&mut g, &store, cfg, song);
        let value = g.value(rows).clone();
        (store, value)
    }

    fn block_of<'a>(layout: &'a [ConditionBlock], name: &str) -> &'a ConditionBlock {
        layout.iter().find(|b| b.name == name).unwrap()
    }

    #[test]
    fn layout_covers_the_full_width_in_order() {
        let cfg = tiny();
        let layout = condition_layout(&cfg);
        assert_eq!(layout.len(), 17); // lyric + 3 tags + 12 attrs + learned
        assert_eq!(layout[0].range, 0..8);
        assert_eq!(layout.last().unwrap().range.end, cfg.d_cond());
        let mut at = 0;
        for b in &layout {
            assert_eq!(b.range.start, at, "gap before {}", b.name);
            at = b.range.end;
        }
    }

    #[test]
    fn tag_and_attr_blocks_equal_their_embedding_rows() {
        let cfg = tiny();
        let song = demo_song();
        let (store, rows) = build(&cfg, &song);
        let layout = condition_layout(&cfg);
        assert_eq!(rows.shape(), (5, cfg.d_cond()));

        let key = block_of(&layout, "key");
        let expected = store.get("cond.key").row(song.key).to_vec();
        for r in 0..5 {
            assert_eq!(&rows.row(r)[key.range.clone()], &expected[..], "key block row {r}");
        }
        // structure differs between the two sentences
        let st = block_of(&layout, "structure");
        assert_eq!(&rows.row(0)[st.range.clone()], store.get("cond.structure").row(1));
        assert_eq!(&rows.row(2)[st.range.clone()], store.get("cond.structure").row(3));
        // one attribute block spot-check: PV class of sentence 1 is 1
        let pv = block_of(&layout, "PV");
        assert_eq!(&rows.row(0)[pv.range.clone()], store.get("cond.attr.PV").row(1));
    }

    #[test]
    fn learned_block_is_the_given_vector_or_zero() {
        let mut cfg = tiny();
        cfg.flags.learned = true;
        let song = demo_song();
        let (_, rows) = build(&cfg, &song);
        let layout = condition_layout(&cfg);
        let lb = block_of(&layout, "learned").range.clone();
        assert!(rows.row(0)[lb.clone()].iter().all(|&v| v == 0.0), "absent feature must be zero");
        assert_eq!(&rows.row(2)[lb.clone()], &[9.0, 8.0, 7.0, 6.0, 5.0, 4.0, 3.0, 2.0]);
        assert_eq!(rows.row(3)[lb.clone()], rows.row(2)[lb], "feature repeats per syllable");
    }

    #[test]
    fn disabled_flags_zero_their_blocks_but_not_others() {
        let mut cfg = tiny();
        cfg.flags = ConditionFlags::lyric_only();
        let song = demo_song();
        let (_, rows) = build(&cfg, &song);
        let layout = condition_layout(&cfg);
        let lyric = block_of(&layout, "lyric").range.clone();
        assert!(rows.row(0)[lyric].iter().any(|&v| v != 0.0), "lyric block stays live");
        for b in &layout {
            if b.name != "lyric" {
                for r in 0..rows.rows() {
                    assert!(
                        rows.row(r)[b.range.clone()].iter().all(|&v| v == 0.0),
                        "block {} should be zero",
                        b.name
                    );
                }
            }
        }
    }

    #[test]
    fn lyric_block_changes_with_tone() {
        let cfg = tiny();
        let mut song = demo_song();
        let (_, base) = build(&cfg, &song);
        song.sentences[0].tone_ids[0] = 2;
        let (_, changed) = build(&cfg, &song);
        let layout = condition_layout(&cfg);
        let lyric = block_of(&layout, "lyric").range.clone();
        assert_ne!(&base.row(0)[lyric.clone()], &changed.row(0)[lyric.clone()], "tone must move the lyric block");
        assert_eq!(&base.row(1)[lyric.clone()], &changed.row(1)[lyric], "other syllables unaffected");
    }
}
