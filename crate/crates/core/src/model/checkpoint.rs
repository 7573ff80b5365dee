//! Binary checkpoint layout:
//!
//! ```text
//! magic    8 bytes  "SPLSCKPT"
//! len      u64 LE   byte length of the JSON header
//! header   JSON     format_version, model_config, vocab_hash, head,
//!                   tensors [{name, shape}], payload_sha256, vocab, metadata
//! payload  f64 LE   every tensor in header order, row-major
//! ```
//!
//! The vocabulary travels inside the header so a checkpoint is usable on its
//! own; loading against an external vocabulary still checks the hash.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::heads::Pooling;
use super::params::{init_params, Parameters};
use super::ModelConfig;
use crate::tokenizer::Vocabulary;
use crate::{artifact, sha256_hex, Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SPLSCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum HeadSpec {
    Sequence { pooling: Pooling },
    Token,
}

#[derive(Serialize, Deserialize)]
struct TensorInfo {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    model_config: ModelConfig,
    vocab_hash: String,
    head: HeadSpec,
    tensors: Vec<TensorInfo>,
    payload_sha256: String,
    vocab: Vec<String>,
    #[serde(default)]
    metadata: Value,
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub params: Parameters,
    pub head: HeadSpec,
    pub vocab_hash: String,
    pub vocab: Vocabulary,
    /// Free-form provenance (training config, dataset manifest, metric trace).
    pub metadata: Value,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut payload = Vec::with_capacity(self.params.num_parameters() * 8);
        for (_, t) in self.params.tensors() {
            for x in t {
                payload.extend_from_slice(&x.to_le_bytes());
            }
        }
        let header = Header {
            format_version: CHECKPOINT_VERSION,
            model_config: self.params.config.clone(),
            vocab_hash: self.vocab_hash.clone(),
            head: self.head,
            tensors: self
                .params
                .shapes()
                .into_iter()
                .map(|(name, shape)| TensorInfo { name, shape })
                .collect(),
            payload_sha256: sha256_hex(&payload),
            vocab: self.vocab.pieces().to_vec(),
            metadata: self.metadata.clone(),
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(16 + json.len() + payload.len());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&payload);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        if bytes.len() < 16 || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(bad("not a checkpoint file (bad magic)"));
        }
        let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let body = &bytes[16..];
        if len > body.len() {
            return Err(bad("truncated header"));
        }
        let header: Header =
            serde_json::from_slice(&body[..len]).map_err(|e| Error::Checkpoint(format!("unreadable header: {e}")))?;
        if header.format_version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {} (expected {CHECKPOINT_VERSION})",
                header.format_version
            )));
        }
        let payload = &body[len..];
        if sha256_hex(payload) != header.payload_sha256 {
            return Err(bad("payload checksum mismatch (file corrupted)"));
        }
        let vocab = Vocabulary::from_pieces(header.vocab)?;
        if vocab.hash() != header.vocab_hash {
            return Err(bad("embedded vocabulary does not match its recorded hash"));
        }
        if vocab.len() != header.model_config.vocab_size {
            return Err(bad("embedded vocabulary size differs from the model config"));
        }
        let mut params = init_params(&header.model_config, 0)?;
        let expected = params.shapes();
        if expected.len() != header.tensors.len()
            || expected
                .iter()
                .zip(&header.tensors)
                .any(|((n, s), t)| *n != t.name || *s != t.shape)
        {
            return Err(bad("tensor listing does not match the model config"));
        }
        if payload.len() != params.num_parameters() * 8 {
            return Err(bad("payload length does not match the tensor listing"));
        }
        let mut chunks = payload.chunks_exact(8);
        for (_, t) in params.tensors_mut() {
            for x in t.iter_mut() {
                *x = f64::from_le_bytes(chunks.next().expect("length checked").try_into().expect("8 bytes"));
            }
        }
        Ok(Checkpoint {
            params,
            head: header.head,
            vocab_hash: header.vocab_hash,
            vocab,
            metadata: header.metadata,
        })
    }
}

pub fn save_checkpoint(
    path: &Path,
    params: &Parameters,
    head: HeadSpec,
    vocab: &Vocabulary,
    metadata: Value,
) -> Result<()> {
    if vocab.len() != params.config.vocab_size {
        return Err(Error::Checkpoint(format!(
            "vocabulary has {} pieces but the model has {} embedding rows",
            vocab.len(),
            params.config.vocab_size
        )));
    }
    let ckpt = Checkpoint {
        params: params.clone(),
        head,
        vocab_hash: vocab.hash(),
        vocab: vocab.clone(),
        metadata,
    };
    artifact::write_file(path, &ckpt.to_bytes()?)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes).map_err(|e| match e {
        Error::Checkpoint(m) => Error::Checkpoint(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Loads a checkpoint and refuses it unless it was trained with `vocab`.
pub fn load_checkpoint_for(path: &Path, vocab: &Vocabulary) -> Result<Checkpoint> {
    let ckpt = load_checkpoint(path)?;
    let actual = vocab.hash();
    if ckpt.vocab_hash != actual {
        return Err(Error::VocabMismatch {
            expected: ckpt.vocab_hash,
            actual,
        });
    }
    Ok(ckpt)
}
