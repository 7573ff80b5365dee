//! Context-based phrase recognition over novel corpora.
//!
//! The pipeline runs in five stages:
//!
//! 1. [`corpus`] normalizes plain-text documents and segments them into
//!    sentences, paragraphs or token-budgeted packed sequences.
//! 2. [`spellbook`] labels segments against a phrase lexicon (incantations and
//!    spell names) with word-boundary, leftmost-longest matching.
//! 3. [`dataset`] builds sequence-level and IOB token-level datasets with
//!    seeded negative sampling and a stratified train/dev split.
//! 4. [`tokenizer`] and [`model`] encode segments with WordPiece and train a
//!    small transformer encoder with interchangeable heads.
//! 5. [`eval`] and [`attribution`] score predictions and explain them.
//!
//! Data-parallel work (labeling, batch forward/backward passes, prediction)
//! goes through [`exec::Exec`], which uses rayon when the `parallel` feature
//! is enabled and falls back to plain iteration otherwise.

pub mod artifact;
pub mod attribution;
pub mod corpus;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod exec;
pub mod model;
pub mod rng;
pub mod spellbook;
pub mod synth;
pub mod tokenizer;

pub use error::{Error, Result};
pub use exec::Exec;

use sha2::{Digest, Sha256};

/// Hex-encoded SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Directory holding the bundled data files (lexicons, vocabulary, corpora).
pub fn bundled_data_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("data")
}
