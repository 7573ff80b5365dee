//! The flat TOML config accepted by `train --model-config`.
//!
//! ```toml
//! layers = 2
//! hidden = 64
//! heads = 2
//! ffn = 256
//! dropout = 0.1
//! epochs = 5
//! learning_rate = 1e-3
//! pooling = "mean"
//! ```
//!
//! Every key is optional; unknown keys are rejected. Command-line flags win
//! over the file, the file over the desk defaults.

use serde::Deserialize;
use spellscan::model::{ModelConfig, Pooling, TrainConfig};

use crate::commands::CliError;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyFile {
    pub layers: Option<usize>,
    pub hidden: Option<usize>,
    pub heads: Option<usize>,
    pub ffn: Option<usize>,
    pub max_positions: Option<usize>,
    pub dropout: Option<f64>,
    pub final_layer_norm: Option<bool>,
    pub vocab_size: Option<usize>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub seed: Option<u64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub epsilon: Option<f64>,
    pub max_len: Option<usize>,
    pub pooling: Option<String>,
}

impl StudyFile {
    pub fn parse(body: &str) -> Result<Self, CliError> {
        toml::from_str(body).map_err(|e| CliError::usage(format!("model config: {}", e.message())))
    }

    /// Model config for a vocabulary of `vocab_size` pieces.
    pub fn model(&self, vocab_size: usize) -> Result<ModelConfig, CliError> {
        if let Some(v) = self.vocab_size {
            if v != vocab_size {
                return Err(CliError::usage(format!(
                    "model config says vocab_size = {v} but the vocabulary has {vocab_size} pieces"
                )));
            }
        }
        let d = ModelConfig::desk(vocab_size);
        Ok(ModelConfig {
            layers: self.layers.unwrap_or(d.layers),
            hidden: self.hidden.unwrap_or(d.hidden),
            heads: self.heads.unwrap_or(d.heads),
            ffn: self.ffn.unwrap_or(d.ffn),
            vocab_size,
            max_positions: self.max_positions.unwrap_or(d.max_positions),
            dropout: self.dropout.unwrap_or(d.dropout),
            final_layer_norm: self.final_layer_norm.unwrap_or(d.final_layer_norm),
        })
    }

    pub fn train(&self) -> TrainConfig {
        let d = TrainConfig::default();
        TrainConfig {
            epochs: self.epochs.unwrap_or(d.epochs),
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            learning_rate: self.learning_rate.unwrap_or(d.learning_rate),
            seed: self.seed.unwrap_or(d.seed),
            beta1: self.beta1.unwrap_or(d.beta1),
            beta2: self.beta2.unwrap_or(d.beta2),
            epsilon: self.epsilon.unwrap_or(d.epsilon),
            max_len: self.max_len.unwrap_or(d.max_len),
        }
    }

    pub fn pooling(&self) -> Result<Option<Pooling>, CliError> {
        self.pooling.as_deref().map(parse_pooling).transpose()
    }
}

pub fn parse_pooling(s: &str) -> Result<Pooling, CliError> {
    Pooling::parse(s).ok_or_else(|| CliError::usage(format!("unknown pooling {s:?} (expected cls, mean or max)")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let f = StudyFile::parse("hidden = 32\nepochs = 9\npooling = \"max\"\n").unwrap();
        let m = f.model(100).unwrap();
        assert_eq!((m.hidden, m.layers, m.vocab_size), (32, 2, 100));
        assert_eq!(f.train().epochs, 9);
        assert_eq!(f.pooling().unwrap(), Some(Pooling::Max));
    }

    #[test]
    fn unknown_keys_and_contradictions_are_rejected() {
        assert!(StudyFile::parse("hiden = 3").is_err());
        let f = StudyFile::parse("vocab_size = 10").unwrap();
        assert!(f.model(11).is_err());
    }
}
