//! Sequence- and token-classification datasets.
//!
//! Every positive segment is kept; negatives are sampled uniformly without
//! replacement at `neg_ratio` negatives per positive (all of them when fewer
//! are available). The selection is shuffled and split into train/dev per
//! label, all driven by one [`SplitMix64`] stream seeded from the config.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::corpus::{corpus_hash, Segment, SplitStrategy};
use crate::rng::{SplitMix64, GENERATOR_NAME};
use crate::spellbook::{label_segment, MatchMode, MatchSpan, SpellLexicon};
use crate::tokenizer::split_words;
use crate::{artifact, Error, Exec, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeqLabel {
    Negative,
    Positive,
}

impl SeqLabel {
    pub fn from_bool(positive: bool) -> Self {
        if positive {
            SeqLabel::Positive
        } else {
            SeqLabel::Negative
        }
    }

    pub fn is_positive(self) -> bool {
        self == SeqLabel::Positive
    }

    /// Class index used by the sequence head (negative = 0).
    pub fn class(self) -> usize {
        match self {
            SeqLabel::Negative => 0,
            SeqLabel::Positive => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeqExample {
    pub seg_id: String,
    pub text: String,
    pub label: SeqLabel,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Tag {
    O,
    B,
    I,
}

impl Tag {
    /// Class index used by the token head (O = 0, B = 1, I = 2).
    pub fn class(self) -> usize {
        match self {
            Tag::O => 0,
            Tag::B => 1,
            Tag::I => 2,
        }
    }

    pub fn from_class(c: usize) -> Self {
        match c {
            0 => Tag::O,
            1 => Tag::B,
            _ => Tag::I,
        }
    }

    pub fn is_spell(self) -> bool {
        self != Tag::O
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokExample {
    pub seg_id: String,
    pub words: Vec<String>,
    pub tags: Vec<Tag>,
}

impl TokExample {
    pub fn is_positive(&self) -> bool {
        self.tags.iter().any(|t| t.is_spell())
    }
}

/// True if no `I` starts the sequence or follows an `O`.
pub fn iob_valid(tags: &[Tag]) -> bool {
    let mut prev = Tag::O;
    for &t in tags {
        if t == Tag::I && prev == Tag::O {
            return false;
        }
        prev = t;
    }
    true
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BuildConfig {
    pub mode: MatchMode,
    pub neg_ratio: u32,
    pub dev_fraction: f64,
    pub seed: u64,
    pub strategy: SplitStrategy,
}

impl Default for BuildConfig {
    fn default() -> Self {
        BuildConfig {
            mode: MatchMode::Combined,
            neg_ratio: 10,
            dev_fraction: 0.2,
            seed: 42,
            strategy: SplitStrategy::SentenceSplit,
        }
    }
}

impl BuildConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.dev_fraction) {
            return Err(Error::Config(format!(
                "dev_fraction must lie in [0, 1), got {}",
                self.dev_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Sequence,
    Token,
}

impl TaskKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "sequence" => Some(TaskKind::Sequence),
            "token" => Some(TaskKind::Token),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub positives: usize,
    pub negatives: usize,
    pub train: usize,
    pub dev: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub task: TaskKind,
    pub counts: Counts,
    pub config: BuildConfig,
    pub generator: String,
    /// Dev split is drawn per label.
    pub stratified: bool,
    pub lexicon_hash: String,
    pub corpus_hash: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplitDataset<T> {
    pub train: Vec<T>,
    pub dev: Vec<T>,
    pub manifest: DatasetManifest,
}

/// Indices of the selected segments and whether each goes to dev.
struct Selection {
    train: Vec<usize>,
    dev: Vec<usize>,
    positives: usize,
    negatives: usize,
}

fn select(positive: &[bool], cfg: &BuildConfig) -> Result<Selection> {
    cfg.validate()?;
    let pos: Vec<usize> = (0..positive.len()).filter(|&i| positive[i]).collect();
    let neg: Vec<usize> = (0..positive.len()).filter(|&i| !positive[i]).collect();
    if pos.is_empty() {
        return Err(Error::Build("empty positive class".into()));
    }
    let mut rng = SplitMix64::new(cfg.seed);
    let want = (cfg.neg_ratio as usize).saturating_mul(pos.len());
    let sampled = rng.sample(&neg, want);
    let negatives = sampled.len();
    let mut all: Vec<usize> = pos.iter().copied().chain(sampled).collect();
    rng.shuffle(&mut all);

    let dev_quota = |count: usize| -> usize {
        let mut k = (cfg.dev_fraction * count as f64).round() as usize;
        if cfg.dev_fraction > 0.0 && count >= 2 {
            k = k.clamp(1, count - 1);
        }
        k.min(count)
    };
    let mut quota = [dev_quota(negatives), dev_quota(pos.len())];
    let (mut train, mut dev) = (Vec::new(), Vec::new());
    for i in all {
        let q = &mut quota[positive[i] as usize];
        if *q > 0 {
            *q -= 1;
            dev.push(i);
        } else {
            train.push(i);
        }
    }
    Ok(Selection {
        train,
        dev,
        positives: pos.len(),
        negatives,
    })
}

fn manifest(
    task: TaskKind,
    sel: &Selection,
    cfg: &BuildConfig,
    lexicon: &SpellLexicon,
    segments: &[Segment],
) -> DatasetManifest {
    DatasetManifest {
        task,
        counts: Counts {
            positives: sel.positives,
            negatives: sel.negatives,
            train: sel.train.len(),
            dev: sel.dev.len(),
        },
        config: *cfg,
        generator: GENERATOR_NAME.into(),
        stratified: true,
        lexicon_hash: lexicon.hash(),
        corpus_hash: corpus_hash(segments),
    }
}

pub fn build_sequence_dataset(
    segments: &[Segment],
    lexicon: &SpellLexicon,
    cfg: &BuildConfig,
    exec: Exec,
) -> Result<SplitDataset<SeqExample>> {
    let positive = exec.map(segments, |s| label_segment(&s.text, lexicon, cfg.mode).positive);
    let sel = select(&positive, cfg)?;
    let make = |i: &usize| SeqExample {
        seg_id: segments[*i].seg_id.clone(),
        text: segments[*i].text.clone(),
        label: SeqLabel::from_bool(positive[*i]),
    };
    Ok(SplitDataset {
        train: sel.train.iter().map(make).collect(),
        dev: sel.dev.iter().map(make).collect(),
        manifest: manifest(TaskKind::Sequence, &sel, cfg, lexicon, segments),
    })
}

/// Every segment labeled, no sampling.
pub fn build_eval_dataset(segments: &[Segment], lexicon: &SpellLexicon, mode: MatchMode, exec: Exec) -> Vec<SeqExample> {
    exec.map(segments, |s| SeqExample {
        seg_id: s.seg_id.clone(),
        text: s.text.clone(),
        label: SeqLabel::from_bool(label_segment(&s.text, lexicon, mode).positive),
    })
}

/// Word-level IOB tags for `text` given its match spans: the first word of
/// each span is `B`, the remaining span words `I`, everything else `O`.
pub fn tag_words(text: &str, spans: &[MatchSpan]) -> (Vec<String>, Vec<Tag>) {
    let words = split_words(text);
    let mut tags = vec![Tag::O; words.len()];
    for span in spans {
        let mut first = true;
        for (i, w) in words.iter().enumerate() {
            if w.start < span.end && w.end > span.start {
                tags[i] = if first { Tag::B } else { Tag::I };
                first = false;
            }
        }
    }
    (words.into_iter().map(|w| w.text).collect(), tags)
}

fn token_example(seg: &Segment, lexicon: &SpellLexicon, mode: MatchMode) -> TokExample {
    let label = label_segment(&seg.text, lexicon, mode);
    let (words, tags) = tag_words(&seg.text, &label.spans);
    TokExample {
        seg_id: seg.seg_id.clone(),
        words,
        tags,
    }
}

pub fn build_token_dataset(
    segments: &[Segment],
    lexicon: &SpellLexicon,
    cfg: &BuildConfig,
    exec: Exec,
) -> Result<SplitDataset<TokExample>> {
    let examples = exec.map(segments, |s| token_example(s, lexicon, cfg.mode));
    let positive: Vec<bool> = examples.iter().map(TokExample::is_positive).collect();
    let sel = select(&positive, cfg)?;
    Ok(SplitDataset {
        train: sel.train.iter().map(|&i| examples[i].clone()).collect(),
        dev: sel.dev.iter().map(|&i| examples[i].clone()).collect(),
        manifest: manifest(TaskKind::Token, &sel, cfg, lexicon, segments),
    })
}

/// Token-task counterpart of [`build_eval_dataset`].
pub fn build_token_eval_dataset(segments: &[Segment], lexicon: &SpellLexicon, mode: MatchMode, exec: Exec) -> Vec<TokExample> {
    exec.map(segments, |s| token_example(s, lexicon, mode))
}

pub fn export_dataset<T: Serialize>(examples: &[T], path: &Path) -> Result<()> {
    artifact::write_jsonl::<T, ()>(path, None, examples)
}

/// Reads a dataset file; a leading header record is skipped.
pub fn import_dataset<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    Ok(artifact::read_jsonl(path)?.1)
}
