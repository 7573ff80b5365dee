use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::encoder::{backward, encode, ForwardMode};
use super::heads::{argmax, cross_entropy, cross_entropy_grad, pool, pool_backward, seq_logits, tok_logits, Pooling};
use super::params::{Dense, Gradients, Parameters};
use super::predict::word_tags_from_pieces;
use super::TrainConfig;
use crate::dataset::{SeqExample, SeqLabel, Tag, TokExample};
use crate::eval::{softmatch_outcome, ConfusionMatrix};
use crate::rng::SplitMix64;
use crate::tokenizer::{encode_words, split_words, Vocabulary};
use crate::{Error, Exec, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum Target {
    Sequence(SeqLabel),
    Token {
        /// Per-position training tag; `None` for CLS and SEP.
        piece_tags: Vec<Option<Tag>>,
        word_ids: Vec<Option<u32>>,
        /// Gold tag of every source word, including any cut by truncation.
        word_tags: Vec<Tag>,
    },
}

/// One unpadded, model-ready example (CLS .. SEP).
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub seg_id: String,
    pub ids: Vec<u32>,
    pub target: Target,
}

pub fn prepare_sequence(ex: &SeqExample, vocab: &Vocabulary, max_len: usize) -> Example {
    let words: Vec<String> = split_words(&ex.text).into_iter().map(|w| w.text).collect();
    let enc = encode_words(&words, vocab, max_len);
    Example {
        seg_id: ex.seg_id.clone(),
        ids: enc.real_ids().to_vec(),
        target: Target::Sequence(ex.label),
    }
}

/// Continuation pieces of a `B` word are trained as `I`.
pub fn prepare_token(ex: &TokExample, vocab: &Vocabulary, max_len: usize) -> Example {
    let enc = encode_words(&ex.words, vocab, max_len);
    let n = enc.real_len();
    let word_ids = enc.word_ids[..n].to_vec();
    let mut piece_tags = Vec::with_capacity(n);
    let mut prev = None;
    for w in &word_ids {
        piece_tags.push(w.map(|w| {
            let tag = ex.tags[w as usize];
            if prev == Some(w) && tag == Tag::B {
                Tag::I
            } else {
                tag
            }
        }));
        prev = *w;
    }
    Example {
        seg_id: ex.seg_id.clone(),
        ids: enc.ids[..n].to_vec(),
        target: Target::Token {
            piece_tags,
            word_ids,
            word_tags: ex.tags.clone(),
        },
    }
}

/// Summed loss, number of loss terms and gradient of the summed loss.
fn example_gradients(params: &Parameters, pooling: Pooling, ex: &Example, mode: ForwardMode) -> Result<(f64, usize, Gradients)> {
    let valid = vec![true; ex.ids.len()];
    let cache = encode(params, &ex.ids, &valid, mode)?;
    let mut grads = Gradients::zeros(params);
    let (loss, units, dout) = match &ex.target {
        Target::Sequence(label) => {
            let pooled = pool(&cache.out, &valid, pooling);
            let logits = seq_logits(params, &pooled.vec);
            let dl = Array1::from(cross_entropy_grad(&logits, label.class()));
            let d = &mut grads.dense;
            d.seq_w += &pooled.vec.view().insert_axis(Axis(1)).dot(&dl.view().insert_axis(Axis(0)));
            d.seq_b += &dl;
            let dp = params.dense.seq_w.dot(&dl);
            (cross_entropy(&logits, label.class()), 1, pool_backward(&dp, &pooled, &valid, pooling))
        }
        Target::Token { piece_tags, .. } => {
            let logits = tok_logits(params, &cache.out);
            let mut dl = Array2::zeros(logits.raw_dim());
            let mut loss = 0.0;
            let mut units = 0;
            for (i, tag) in piece_tags.iter().enumerate() {
                if let Some(tag) = tag {
                    let row = logits.row(i);
                    let row = row.as_slice().expect("contiguous row");
                    loss += cross_entropy(row, tag.class());
                    dl.row_mut(i).assign(&Array1::from(cross_entropy_grad(row, tag.class())));
                    units += 1;
                }
            }
            let d = &mut grads.dense;
            d.tok_w += &cache.out.t().dot(&dl);
            d.tok_b += &dl.sum_axis(Axis(0));
            (loss, units, dl.dot(&params.dense.tok_w.t()))
        }
    };
    backward(params, &cache, &dout, &mut grads);
    Ok((loss, units, grads))
}

fn example_loss(params: &Parameters, pooling: Pooling, ex: &Example, mode: ForwardMode) -> Result<(f64, usize)> {
    let valid = vec![true; ex.ids.len()];
    let cache = encode(params, &ex.ids, &valid, mode)?;
    Ok(match &ex.target {
        Target::Sequence(label) => {
            let logits = seq_logits(params, &pool(&cache.out, &valid, pooling).vec);
            (cross_entropy(&logits, label.class()), 1)
        }
        Target::Token { piece_tags, .. } => {
            let logits = tok_logits(params, &cache.out);
            let mut loss = 0.0;
            let mut units = 0;
            for (i, tag) in piece_tags.iter().enumerate() {
                if let Some(tag) = tag {
                    loss += cross_entropy(logits.row(i).as_slice().expect("contiguous row"), tag.class());
                    units += 1;
                }
            }
            (loss, units)
        }
    })
}

fn example_mode(dropout_seed: Option<u64>, index: usize) -> ForwardMode {
    match dropout_seed {
        Some(seed) => ForwardMode::Train {
            seed: SplitMix64::new(seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)).next_u64(),
        },
        None => ForwardMode::Eval,
    }
}

/// Mean loss over a batch and its exact gradient. Sequence examples weigh
/// one term each, token examples one term per tagged piece.
/// `dropout_seed: None` runs without dropout.
pub fn batch_loss_and_gradients(
    params: &Parameters,
    pooling: Pooling,
    batch: &[Example],
    dropout_seed: Option<u64>,
    exec: Exec,
) -> Result<(f64, Gradients)> {
    let per_example = exec.map_indexed(batch, |i, ex| example_gradients(params, pooling, ex, example_mode(dropout_seed, i)));
    let mut parts = Vec::with_capacity(batch.len());
    for p in per_example {
        parts.push(p?);
    }
    let units: usize = parts.iter().map(|p| p.1).sum();
    let mut grads = Gradients::zeros(params);
    if units == 0 {
        return Ok((0.0, grads));
    }
    let scale = 1.0 / units as f64;
    let mut loss = 0.0;
    for (l, _, g) in &parts {
        loss += l;
        grads.add_scaled(g, scale);
    }
    Ok((loss * scale, grads))
}

pub fn batch_loss(params: &Parameters, pooling: Pooling, batch: &[Example], dropout_seed: Option<u64>) -> Result<f64> {
    let mut loss = 0.0;
    let mut units = 0;
    for (i, ex) in batch.iter().enumerate() {
        let (l, u) = example_loss(params, pooling, ex, example_mode(dropout_seed, i))?;
        loss += l;
        units += u;
    }
    Ok(if units == 0 { 0.0 } else { loss / units as f64 })
}

/// Adam with bias correction and a constant learning rate.
pub struct Adam {
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    t: i32,
    m_tok: Array2<f64>,
    v_tok: Array2<f64>,
    m: Dense,
    v: Dense,
}

impl Adam {
    pub fn new(params: &Parameters, cfg: &TrainConfig) -> Self {
        Adam {
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            epsilon: cfg.epsilon,
            t: 0,
            m_tok: Array2::zeros(params.token_emb.raw_dim()),
            v_tok: Array2::zeros(params.token_emb.raw_dim()),
            m: params.dense.zeros_like(),
            v: params.dense.zeros_like(),
        }
    }

    pub fn step(&mut self, params: &mut Parameters, grads: &Gradients, lr: f64) {
        self.t += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.epsilon);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        };
        let hidden = params.token_emb.ncols();
        let zero = Array1::zeros(hidden);
        for r in 0..params.token_emb.nrows() {
            let g = grads.token_emb.get(&(r as u32)).unwrap_or(&zero);
            let mut p = params.token_emb.row_mut(r);
            let mut m = self.m_tok.row_mut(r);
            let mut v = self.v_tok.row_mut(r);
            for d in 0..hidden {
                update(&mut p[d], &mut m[d], &mut v[d], g[d]);
            }
        }
        let tensors = params.dense.tensors_mut();
        let ms = self.m.tensors_mut();
        let vs = self.v.tensors_mut();
        for ((((_, p), (_, m)), (_, v)), (_, g)) in tensors.into_iter().zip(ms).zip(vs).zip(grads.dense.tensors()) {
            for i in 0..p.len() {
                update(&mut p[i], &mut m[i], &mut v[i], g[i]);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub learning_rate: f64,
    pub dev_loss: Option<f64>,
    pub dev_precision: Option<f64>,
    pub dev_recall: Option<f64>,
    pub dev_f1: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Always "constant": no warm-up, decay or weight decay.
    pub schedule: String,
    pub steps: u64,
    pub epochs: Vec<EpochMetrics>,
}

/// Confusion matrix of `examples` under the current parameters, scored per
/// sequence (sequence targets) or by word-level soft matching (token targets).
pub(crate) fn evaluate_examples(params: &Parameters, pooling: Pooling, examples: &[Example], exec: Exec) -> Result<ConfusionMatrix> {
    let outcomes = exec.try_map(examples, |ex| -> Result<(bool, bool)> {
        let valid = vec![true; ex.ids.len()];
        let cache = encode(params, &ex.ids, &valid, ForwardMode::Eval)?;
        Ok(match &ex.target {
            Target::Sequence(label) => {
                let logits = seq_logits(params, &pool(&cache.out, &valid, pooling).vec);
                (label.is_positive(), argmax(&logits) == 1)
            }
            Target::Token { word_ids, word_tags, .. } => {
                let logits = tok_logits(params, &cache.out);
                let piece_tags: Vec<Tag> = logits
                    .rows()
                    .into_iter()
                    .map(|r| Tag::from_class(argmax(r.as_slice().expect("contiguous row"))))
                    .collect();
                let pred = word_tags_from_pieces(&piece_tags, word_ids, word_tags.len());
                softmatch_outcome(word_tags, &pred)
            }
        })
    })?;
    let mut m = ConfusionMatrix::default();
    for (gold, pred) in outcomes {
        m.record(gold, pred);
    }
    Ok(m)
}

/// Trains in place with Adam over seeded-shuffled batches, recording
/// training loss and dev metrics after every epoch.
pub fn train(
    params: &mut Parameters,
    pooling: Pooling,
    train_set: &[Example],
    dev_set: &[Example],
    cfg: &TrainConfig,
    exec: Exec,
) -> Result<TrainReport> {
    cfg.validate(&params.config)?;
    if train_set.is_empty() {
        return Err(Error::Input("training set is empty".into()));
    }
    let mut rng = SplitMix64::new(cfg.seed);
    let mut adam = Adam::new(params, cfg);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut report = TrainReport {
        schedule: "constant".into(),
        steps: 0,
        epochs: Vec::with_capacity(cfg.epochs),
    };
    for epoch in 1..=cfg.epochs {
        rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<Example> = chunk.iter().map(|&i| train_set[i].clone()).collect();
            let seed = rng.next_u64();
            let (loss, grads) = batch_loss_and_gradients(params, pooling, &batch, Some(seed), exec)?;
            if let Some(name) = grads.first_non_finite() {
                return Err(Error::NonFinite(name));
            }
            if !loss.is_finite() {
                return Err(Error::NonFinite("loss".into()));
            }
            adam.step(params, &grads, cfg.learning_rate);
            loss_sum += loss;
            batches += 1;
            report.steps += 1;
        }
        let mut metrics = EpochMetrics {
            epoch,
            train_loss: loss_sum / batches as f64,
            learning_rate: cfg.learning_rate,
            dev_loss: None,
            dev_precision: None,
            dev_recall: None,
            dev_f1: None,
        };
        if !dev_set.is_empty() {
            let r = evaluate_examples(params, pooling, dev_set, exec)?.report();
            metrics.dev_loss = Some(batch_loss(params, pooling, dev_set, None)?);
            metrics.dev_precision = Some(r.precision);
            metrics.dev_recall = Some(r.recall);
            metrics.dev_f1 = Some(r.f1);
        }
        report.epochs.push(metrics);
    }
    Ok(report)
}
