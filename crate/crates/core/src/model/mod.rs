//! Transformer encoder with interchangeable classification heads.
//!
//! The encoder is a pre-norm stack: token plus learned absolute position
//! embeddings, then per layer multi-head self-attention and a GELU
//! feed-forward block, each wrapped as `x + sublayer(layer_norm(x))`, and a
//! final layer norm. Two heads sit on the last hidden states: a pooled
//! two-class sequence head and a per-position three-class (O/B/I) token head.
//!
//! Gradients are derived by hand (see `encoder.rs`) and checked against
//! central finite differences in the test suite. All math is `f64`.

mod checkpoint;
mod encoder;
mod heads;
mod params;
mod predict;
mod train;

pub use checkpoint::{load_checkpoint, load_checkpoint_for, save_checkpoint, Checkpoint, HeadSpec, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use encoder::{attention_weights, forward_encoder, ForwardMode};
pub use heads::{cross_entropy, forward_sequence_logits, forward_token_logits, sequence_loss, token_loss, Pooling};
pub use params::{init_params, resize_embeddings, Dense, Gradients, Layer, Parameters, INIT_STD};
pub use predict::{predict_sequence, predict_tokens, word_tags_from_pieces, TextItem};
pub use train::{
    batch_loss, batch_loss_and_gradients, prepare_sequence, prepare_token, train, Adam, EpochMetrics, Example, Target,
    TrainReport,
};

pub(crate) use heads::input_gradients;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub layers: usize,
    pub hidden: usize,
    pub heads: usize,
    pub ffn: usize,
    pub vocab_size: usize,
    pub max_positions: usize,
    pub dropout: f64,
    /// Layer norm on the last hidden states. Disabling it (with zero layers)
    /// reduces the encoder to a bag of embeddings, used for diagnostics.
    #[serde(default = "default_true")]
    pub final_layer_norm: bool,
}

fn default_true() -> bool {
    true
}

impl ModelConfig {
    /// Desk-scale default: 2 layers, hidden 64, 2 heads, ffn 256, 128 positions.
    pub fn desk(vocab_size: usize) -> Self {
        ModelConfig {
            layers: 2,
            hidden: 64,
            heads: 2,
            ffn: 256,
            vocab_size,
            max_positions: 128,
            dropout: 0.1,
            final_layer_norm: true,
        }
    }

    /// The 12-layer, 768-wide reference configuration.
    pub fn reference(vocab_size: usize) -> Self {
        ModelConfig {
            layers: 12,
            hidden: 768,
            heads: 12,
            ffn: 3072,
            vocab_size,
            max_positions: 384,
            dropout: 0.1,
            final_layer_norm: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        if self.hidden == 0 || self.heads == 0 || self.vocab_size == 0 || self.max_positions == 0 {
            return err(format!("hidden, heads, vocab_size and max_positions must be positive: {self:?}"));
        }
        if self.layers > 0 && self.ffn == 0 {
            return err("ffn must be positive".into());
        }
        if self.hidden % self.heads != 0 {
            return err(format!("hidden ({}) is not divisible by heads ({})", self.hidden, self.heads));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return err(format!("dropout must lie in [0, 1), got {}", self.dropout));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.hidden / self.heads
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub max_len: usize,
}

impl Default for TrainConfig {
    /// Five epochs, batch 16, from-scratch learning rate 1e-3, 128 tokens.
    fn default() -> Self {
        TrainConfig {
            epochs: 5,
            batch_size: 16,
            learning_rate: 1e-3,
            seed: 42,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            max_len: 128,
        }
    }
}

impl TrainConfig {
    /// Schedule for fine-tuning a loaded checkpoint: lr 2e-5, 384 tokens.
    pub fn fine_tuning() -> Self {
        TrainConfig {
            learning_rate: 2e-5,
            max_len: 384,
            ..Default::default()
        }
    }

    pub fn validate(&self, model: &ModelConfig) -> Result<()> {
        if self.batch_size == 0 || self.learning_rate <= 0.0 || self.max_len < 3 {
            return Err(Error::Config(format!("invalid training config: {self:?}")));
        }
        if self.max_len > model.max_positions {
            return Err(Error::Config(format!(
                "max_len {} exceeds the model's {} positions",
                self.max_len, model.max_positions
            )));
        }
        Ok(())
    }
}
