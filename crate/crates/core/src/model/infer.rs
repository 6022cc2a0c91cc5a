//! Incremental decoding with a per-layer KV cache, grammar-masked nucleus
//! sampling, and whole-song generation.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::condition::{condition_rows_node, SongCond};
use super::config::ModelConfig;
use super::ModelError;
use crate::nn::math::{gelu, layer_norm_row, softmax_in_place};
use crate::nn::{matmul, sinusoidal_positions, Graph, ParamStore, Tensor};
use crate::remi::{detokenize_song, GrammarState, LyricSheet, SongTags, Token, Vocabulary, VOCAB_SIZE};
use crate::score::SongRecord;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingParams {
    /// Softmax temperature; `0` means greedy argmax.
    pub temperature: f64,
    /// Nucleus mass; `1` disables truncation.
    pub top_p: f64,
    pub seed: u64,
    /// Hard cap on emitted tokens before generation fails as incomplete.
    pub max_tokens: usize,
}

impl Default for SamplingParams {
    fn default() -> SamplingParams {
        SamplingParams { temperature: 1.0, top_p: 0.9, seed: 0, max_tokens: 1024 }
    }
}

/// Samples a token id from masked, temperature-scaled, nucleus-truncated
/// logits. Deterministic given the RNG state; `temperature == 0` is argmax
/// over the legal set (ties to the lowest id).
pub fn nucleus_sample(
    logits: &[f64],
    legal: &[bool],
    temperature: f64,
    top_p: f64,
    rng: &mut ChaCha8Rng,
) -> usize {
    assert_eq!(logits.len(), legal.len(), "nucleus_sample: mask length");
    assert!(legal.iter().any(|&ok| ok), "nucleus_sample: no legal token");
    assert!((0.0..=1.0).contains(&top_p) && top_p > 0.0, "nucleus_sample: top_p must be in (0, 1]");
    assert!(temperature >= 0.0, "nucleus_sample: negative temperature");

    if temperature == 0.0 {
        return logits
            .iter()
            .enumerate()
            .filter(|(i, _)| legal[*i])
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
            .map(|(i, _)| i)
            .expect("non-empty legal set");
    }

    let mut scaled: Vec<f64> = logits
        .iter()
        .zip(legal)
        .map(|(&z, &ok)| if ok { z / temperature } else { f64::NEG_INFINITY })
        .collect();
    softmax_in_place(&mut scaled);

    // Sort by probability descending (ties to lower id for determinism),
    // keep the smallest prefix with mass ≥ top_p, then renormalize.
    let mut order: Vec<usize> = (0..scaled.len()).filter(|&i| legal[i]).collect();
    order.sort_by(|&a, &b| scaled[b].total_cmp(&scaled[a]).then(a.cmp(&b)));
    let mut kept = 0;
    let mut mass = 0.0;
    for &i in &order {
        kept += 1;
        mass += scaled[i];
        if mass >= top_p {
            break;
        }
    }
    let nucleus = &order[..kept];
    let mass: f64 = nucleus.iter().map(|&i| scaled[i]).sum();

    let u: f64 = rng.gen::<f64>() * mass;
    let mut cum = 0.0;
    for &i in nucleus {
        cum += scaled[i];
        if u < cum {
            return i;
        }
    }
    *nucleus.last().expect("nucleus keeps at least one token")
}

struct LayerCache {
    /// Cached post-projection keys/values, one row per past position.
    k: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

/// Incremental decoder state. Feeding a token returns the logits for the
/// next position; keys/values are cached per layer so each step is O(T·d)
/// instead of O(T²·d).
pub struct DecoderSession<'a> {
    store: &'a ParamStore,
    cfg: &'a ModelConfig,
    /// Projected per-syllable conditions `[n_syl, d_model]`, or `None` for
    /// unconditional decoding.
    injected: Option<Tensor>,
    positions: Tensor,
    caches: Vec<LayerCache>,
    step: usize,
    syllables_seen: usize,
}

impl<'a> DecoderSession<'a> {
    /// `cond_rows` is the per-syllable condition matrix `[n_syl, d_cond]`.
    pub fn new(store: &'a ParamStore, cfg: &'a ModelConfig, cond_rows: Option<&Tensor>) -> DecoderSession<'a> {
        let injected = cond_rows.map(|rows| {
            assert_eq!(rows.cols(), cfg.d_cond(), "session: condition width {} vs {}", rows.cols(), cfg.d_cond());
            matmul(rows, store.get("dec.w_in"))
        });
        DecoderSession {
            store,
            cfg,
            injected,
            positions: sinusoidal_positions(cfg.max_tokens, cfg.d_model),
            caches: (0..cfg.layers).map(|_| LayerCache { k: Vec::new(), v: Vec::new() }).collect(),
            step: 0,
            syllables_seen: 0,
        }
    }

    pub fn tokens_fed(&self) -> usize {
        self.step
    }

    /// Feeds one token and returns the next-token logits.
    pub fn step(&mut self, token_id: usize) -> Vec<f64> {
        assert!(token_id < VOCAB_SIZE, "session: token id {token_id} out of vocabulary");
        assert!(self.step < self.cfg.max_tokens, "session: over the {} position budget", self.cfg.max_tokens);
        let d = self.cfg.d_model;
        let heads = self.cfg.heads;
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();

        if matches!(Vocabulary.token(token_id), Ok(Token::Syl)) {
            self.syllables_seen += 1;
        }

        let mut x: Vec<f64> = self.store.get("dec.embed").row(token_id).to_vec();
        for (xi, p) in x.iter_mut().zip(self.positions.row(self.step)) {
            *xi += p;
        }

        let e_row: Option<Vec<f64>> = self.injected.as_ref().map(|e| {
            let row = self.syllables_seen.saturating_sub(1).min(e.rows() - 1);
            e.row(row).to_vec()
        });

        for l in 0..self.cfg.layers {
            if let Some(e) = &e_row {
                for (xi, ei) in x.iter_mut().zip(e) {
                    *xi += ei;
                }
            }
            let p = format!("dec.l{l}");
            // attention sublayer
            let mut normed = x.clone();
            layer_norm_row(
                &mut normed,
                self.store.get(&format!("{p}.ln1.g")).row(0),
                self.store.get(&format!("{p}.ln1.b")).row(0),
            );
            let nrow = Tensor::from_vec(1, d, normed);
            let q = matmul(&nrow, self.store.get(&format!("{p}.wq")));
            let k = matmul(&nrow, self.store.get(&format!("{p}.wk")));
            let v = matmul(&nrow, self.store.get(&format!("{p}.wv")));
            let cache = &mut self.caches[l];
            cache.k.push(k.row(0).to_vec());
            cache.v.push(v.row(0).to_vec());
            let t_now = cache.k.len();

            let mut merged = vec![0.0; d];
            for h in 0..heads {
                let cols = h * dh..(h + 1) * dh;
                let mut scores: Vec<f64> = (0..t_now)
                    .map(|t| {
                        let kr = &cache.k[t][cols.clone()];
                        q.row(0)[cols.clone()].iter().zip(kr).map(|(a, b)| a * b).sum::<f64>() * scale
                    })
                    .collect();
                softmax_in_place(&mut scores);
                for (t, w) in scores.iter().enumerate() {
                    for (m, val) in merged[cols.clone()].iter_mut().zip(&cache.v[t][cols.clone()]) {
                        *m += w * val;
                    }
                }
            }
            let attn = matmul(&Tensor::from_vec(1, d, merged), self.store.get(&format!("{p}.wo")));
            for (xi, a) in x.iter_mut().zip(attn.row(0)) {
                *xi += a;
            }

            // feed-forward sublayer
            let mut normed = x.clone();
            layer_norm_row(
                &mut normed,
                self.store.get(&format!("{p}.ln2.g")).row(0),
                self.store.get(&format!("{p}.ln2.b")).row(0),
            );
            let mut h1 = matmul(&Tensor::from_vec(1, d, normed), self.store.get(&format!("{p}.ff1")));
            for (v, b) in h1.data_mut().iter_mut().zip(self.store.get(&format!("{p}.ff1b")).row(0)) {
                *v = gelu(*v + b);
            }
            let out = matmul(&h1, self.store.get(&format!("{p}.ff2")));
            for ((xi, o), b) in x.iter_mut().zip(out.row(0)).zip(self.store.get(&format!("{p}.ff2b")).row(0)) {
                *xi += o + b;
            }
        }

        layer_norm_row(&mut x, self.store.get("dec.lnf.g").row(0), self.store.get("dec.lnf.b").row(0));
        let logits = matmul(&Tensor::from_vec(1, d, x), self.store.get("dec.w_out"));
        let mut row = logits.row(0).to_vec();
        for (z, b) in row.iter_mut().zip(self.store.get("dec.b_out").row(0)) {
            *z += b;
        }
        self.step += 1;
        row
    }
}

/// A finished generation: the raw token stream and the decoded song.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationOutput {
    pub tokens: Vec<Token>,
    pub song: SongRecord,
}

/// Generates one song under the grammar mask. The condition matrix is
/// computed once from `cond`; sampling follows `params`. Fails with
/// [`ModelError::Incomplete`] if the budget runs out before the stream ends.
pub fn generate(
    store: &ParamStore,
    cfg: &ModelConfig,
    cond: &SongCond,
    lyrics: &LyricSheet,
    tags: &SongTags,
    params: &SamplingParams,
) -> Result<GenerationOutput, ModelError> {
    let counts = cond.syllable_counts();
    let mut grammar = GrammarState::new(&counts)?;
    let budget = params.max_tokens.min(cfg.max_tokens);

    let cond_rows = {
        let mut g = Graph::new();
        let rows = condition_rows_node(&mut g, store, cfg, cond);
        g.value(rows).clone()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut session = DecoderSession::new(store, cfg, Some(&cond_rows));
    let mut tokens = vec![Token::Seq];
    grammar.accept(Token::Seq, 0).expect("start token is always legal");
    let mut logits = session.step(Vocabulary.id(Token::Seq));

    let mut legal = vec![false; VOCAB_SIZE];
    while !grammar.is_complete() {
        if tokens.len() >= budget {
            return Err(ModelError::Incomplete { budget, emitted: tokens.len() });
        }
        legal.iter_mut().for_each(|m| *m = false);
        grammar.fill_legal_mask(&mut legal);
        let id = nucleus_sample(&logits, &legal, params.temperature, params.top_p, &mut rng);
        let token = Vocabulary.token(id).expect("sampled id is in vocabulary");
        grammar.accept(token, tokens.len()).expect("mask only allows legal tokens");
        tokens.push(token);
        if grammar.is_complete() {
            break;
        }
        logits = session.step(id);
    }

    let song = detokenize_song(&tokens, lyrics, tags)?;
    Ok(GenerationOutput { tokens, song })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attributes::fit_quantizer;
    use crate::model::train::{init_params, prepare_items};
    use crate::model::vocab::LyricVocab;
    use crate::score::{gen_synthetic, CorpusSpec};

    fn tiny_cfg() -> ModelConfig {
        let mut cfg = ModelConfig::toy();
        cfg.layers = 2;
        cfg.heads = 2;
        cfg.d_model = 16;
        cfg.d_ff = 32;
        cfg.d_lyric = 8;
        cfg.d_attr = 2;
        cfg.num_classes = 4;
        cfg
    }

    #[test]
    fn argmax_at_zero_temperature() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let logits = vec![0.1, 5.0, 3.0, 4.9];
        let legal = vec![true, false, true, true];
        assert_eq!(nucleus_sample(&logits, &legal, 0.0, 0.9, &mut rng), 3);
    }

    #[test]
    fn illegal_tokens_are_never_sampled() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let logits = vec![10.0, 0.0, 0.0, 9.9];
        let legal = vec![false, true, true, false];
        for _ in 0..200 {
            let got = nucleus_sample(&logits, &legal, 1.0, 1.0, &mut rng);
            assert!(legal[got], "sampled masked token {got}");
        }
    }

    #[test]
    fn tiny_top_p_collapses_to_the_mode() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let logits = vec![0.0, 8.0, 0.5, 0.2];
        let legal = vec![true; 4];
        for _ in 0..50 {
            assert_eq!(nucleus_sample(&logits, &legal, 1.0, 1e-9, &mut rng), 1);
        }
    }

    #[test]
    fn session_logits_match_the_full_forward_pass() {
        let corpus = gen_synthetic(&CorpusSpec::new(2, 31)).unwrap();
        let cfg = tiny_cfg();
        let vocab = LyricVocab::from_corpus(&corpus);
        let quantizer = fit_quantizer(&corpus, cfg.num_classes).unwrap();
        let items = prepare_items(&corpus, &cfg, &vocab, &quantizer, crate::lyric::ToneTable::bundled(), None)
            .unwrap();
        let store = init_params(&cfg, vocab.len(), 11);
        let item = &items[0];

        // full pass over the whole stream, conditions gathered per token
        let cond_rows = {
            let mut g = Graph::new();
            let rows = condition_rows_node(&mut g, &store, &cfg, &item.cond);
            g.value(rows).clone()
        };
        let mut per_token = Tensor::zeros(item.token_ids.len(), cfg.d_cond());
        for (t, &s) in item.cond_map.iter().enumerate() {
            per_token.row_mut(t).copy_from_slice(cond_rows.row(s));
        }
        let full = super::super::decoder::forward_logits(&store, &cfg, &item.token_ids, Some(&per_token));

        let mut session = DecoderSession::new(&store, &cfg, Some(&cond_rows));
        for (t, &id) in item.token_ids.iter().enumerate() {
            let row = session.step(id);
            let want = full.row(t);
            let worst = row.iter().zip(want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(worst <= 1e-9, "token {t}: cached and full logits differ by {worst}");
        }
    }

    #[test]
    fn generation_is_grammatical_deterministic_and_decodable() {
        let corpus = gen_synthetic(&CorpusSpec::new(2, 32)).unwrap();
        let cfg = tiny_cfg();
        let vocab = LyricVocab::from_corpus(&corpus);
        let quantizer = fit_quantizer(&corpus, cfg.num_classes).unwrap();
        let items = prepare_items(&corpus, &cfg, &vocab, &quantizer, crate::lyric::ToneTable::bundled(), None)
            .unwrap();
        let store = init_params(&cfg, vocab.len(), 12);
        let item = &items[0];
        let lyrics = LyricSheet::of_song(&corpus[0]);
        let tags = SongTags::of_song(&corpus[0]);
        let params = SamplingParams { temperature: 1.0, top_p: 0.9, seed: 5, max_tokens: 512 };

        let out = generate(&store, &cfg, &item.cond, &lyrics, &tags, &params).unwrap();
        assert_eq!(out.song.num_syllables(), corpus[0].num_syllables());
        assert!(crate::score::validate_song(&out.song).is_empty(), "generated song must validate");

        let again = generate(&store, &cfg, &item.cond, &lyrics, &tags, &params).unwrap();
        assert_eq!(out.tokens, again.tokens, "same seed, same stream");

        let other = generate(
            &store,
            &cfg,
            &item.cond,
            &lyrics,
            &tags,
            &SamplingParams { seed: 6, ..params },
        )
        .unwrap();
        assert!(other.tokens != out.tokens || other.song == out.song, "different seeds may differ");
    }

    #[test]
    fn budget_exhaustion_is_an_explicit_error() {
        let corpus = gen_synthetic(&CorpusSpec::new(1, 33)).unwrap();
        let cfg = tiny_cfg();
        let vocab = LyricVocab::from_corpus(&corpus);
        let quantizer = fit_quantizer(&corpus, cfg.num_classes).unwrap();
        let items = prepare_items(&corpus, &cfg, &vocab, &quantizer, crate::lyric::ToneTable::bundled(), None)
            .unwrap();
        let store = init_params(&cfg, vocab.len(), 13);
        let lyrics = LyricSheet::of_song(&corpus[0]);
        let tags = SongTags::of_song(&corpus[0]);
        let params = SamplingParams { max_tokens: 6, ..SamplingParams::default() };
        match generate(&store, &cfg, &items[0].cond, &lyrics, &tags, &params) {
            Err(ModelError::Incomplete { budget: 6, .. }) => {}
            other => panic!("expected Incomplete, got {other:?}"),
        }
    }
}
