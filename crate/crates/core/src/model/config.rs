//! Model hyperparameters.

use serde::{Deserialize, Serialize};

use crate::attributes::NUM_ATTRIBUTES;

/// Which condition blocks are active. Inactive blocks keep their columns
/// (zero-filled) so the condition width — and therefore the checkpoint
/// layout — is identical across ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionFlags {
    /// Key, emotion, and structure embeddings.
    pub tags: bool,
    /// The twelve musical-attribute class embeddings.
    pub attrs: bool,
    /// The learned per-sentence melody feature.
    pub learned: bool,
}

impl Default for ConditionFlags {
    fn default() -> ConditionFlags {
        ConditionFlags { tags: true, attrs: true, learned: false }
    }
}

impl ConditionFlags {
    /// Lyric block only; everything else zeroed.
    pub fn lyric_only() -> ConditionFlags {
        ConditionFlags { tags: false, attrs: false, learned: false }
    }

    /// Every block active, including the learned feature.
    pub fn all() -> ConditionFlags {
        ConditionFlags { tags: true, attrs: true, learned: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Decoder (and encoder) transformer layers.
    pub layers: usize,
    /// Attention heads per layer.
    pub heads: usize,
    /// Hidden width.
    pub d_model: usize,
    /// Feed-forward inner width.
    pub d_ff: usize,
    /// Width of the lyric block and of the learned-feature block.
    pub d_lyric: usize,
    /// Width of each tag/attribute embedding.
    pub d_attr: usize,
    /// Quantizer classes per attribute.
    pub num_classes: usize,
    /// Decoder position budget (longest token stream).
    pub max_tokens: usize,
    /// Encoder position budget (longest sentence, + 1 for the start slot).
    pub max_lyric: usize,
    pub flags: ConditionFlags,
}

impl ModelConfig {
    /// Full-scale configuration.
    pub fn full() -> ModelConfig {
        ModelConfig {
            layers: 12,
            heads: 8,
            d_model: 512,
            d_ff: 2048,
            d_lyric: 128,
            d_attr: 32,
            num_classes: 64,
            max_tokens: 4096,
            max_lyric: 64,
            flags: ConditionFlags::default(),
        }
    }

    /// Small configuration used by the test suite and CI-scale experiments.
    pub fn toy() -> ModelConfig {
        ModelConfig {
            layers: 2,
            heads: 2,
            d_model: 64,
            d_ff: 256,
            d_lyric: 32,
            d_attr: 8,
            num_classes: 64,
            max_tokens: 1024,
            max_lyric: 64,
            flags: ConditionFlags::default(),
        }
    }

    /// Total condition width: lyric block, 3 tag embeddings, 12 attribute
    /// embeddings, learned block.
    pub fn d_cond(&self) -> usize {
        2 * self.d_lyric + (3 + NUM_ATTRIBUTES) * self.d_attr
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.d_model % self.heads != 0 {
            return Err(format!("d_model {} not divisible by heads {}", self.d_model, self.heads));
        }
        for (v, n) in [
            (self.layers, "layers"),
            (self.heads, "heads"),
            (self.d_model, "d_model"),
            (self.d_ff, "d_ff"),
            (self.d_lyric, "d_lyric"),
            (self.d_attr, "d_attr"),
            (self.num_classes, "num_classes"),
            (self.max_tokens, "max_tokens"),
            (self.max_lyric, "max_lyric"),
        ] {
            if v == 0 {
                return Err(format!("{n} must be positive"));
            }
        }
        Ok(())
    }
}
