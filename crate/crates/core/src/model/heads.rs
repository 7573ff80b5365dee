use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::encoder::{backward, encode, ForwardMode};
use super::params::{Gradients, Parameters};
use crate::dataset::{SeqLabel, Tag};
use crate::tokenizer::Encoding;
use crate::{Exec, Result};

/// How the sequence head reduces the hidden states to one vector.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    Cls,
    #[default]
    Mean,
    Max,
}

impl Pooling {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cls" => Some(Pooling::Cls),
            "mean" => Some(Pooling::Mean),
            "max" => Some(Pooling::Max),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Pooling::Cls => "cls",
            Pooling::Mean => "mean",
            Pooling::Max => "max",
        }
    }
}

pub(crate) struct Pooled {
    pub(crate) vec: Array1<f64>,
    /// Winning row per dimension, for max pooling (first row on ties).
    argmax: Vec<usize>,
}

pub(crate) fn pool(y: &Array2<f64>, valid: &[bool], pooling: Pooling) -> Pooled {
    let hidden = y.ncols();
    match pooling {
        Pooling::Cls => Pooled {
            vec: y.row(0).to_owned(),
            argmax: Vec::new(),
        },
        Pooling::Mean => {
            let mut acc = Array1::zeros(hidden);
            let mut n = 0.0;
            for (row, _) in y.rows().into_iter().zip(valid).filter(|(_, &v)| v) {
                acc += &row;
                n += 1.0;
            }
            Pooled {
                vec: acc / n,
                argmax: Vec::new(),
            }
        }
        Pooling::Max => {
            let mut vec = Array1::from_elem(hidden, f64::NEG_INFINITY);
            let mut argmax = vec![0; hidden];
            for (i, row) in y.rows().into_iter().enumerate() {
                if !valid[i] {
                    continue;
                }
                for d in 0..hidden {
                    if row[d] > vec[d] {
                        vec[d] = row[d];
                        argmax[d] = i;
                    }
                }
            }
            Pooled { vec, argmax }
        }
    }
}

pub(crate) fn pool_backward(dp: &Array1<f64>, pooled: &Pooled, valid: &[bool], pooling: Pooling) -> Array2<f64> {
    let n = valid.len();
    let mut dy = Array2::zeros((n, dp.len()));
    match pooling {
        Pooling::Cls => dy.row_mut(0).assign(dp),
        Pooling::Mean => {
            let count = valid.iter().filter(|&&v| v).count() as f64;
            for (i, &v) in valid.iter().enumerate() {
                if v {
                    dy.row_mut(i).assign(&(dp / count));
                }
            }
        }
        Pooling::Max => {
            for (d, &i) in pooled.argmax.iter().enumerate() {
                dy[[i, d]] = dp[d];
            }
        }
    }
    dy
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Index of the largest value; ties resolve to the lowest index.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// `-log softmax(logits)[target]`, computed stably.
pub fn cross_entropy(logits: &[f64], target: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    lse - logits[target]
}

/// Gradient of [`cross_entropy`] with respect to the logits.
pub(crate) fn cross_entropy_grad(logits: &[f64], target: usize) -> Vec<f64> {
    let mut p = softmax(logits);
    p[target] -= 1.0;
    p
}

pub(crate) fn seq_logits(params: &Parameters, pooled: &Array1<f64>) -> [f64; 2] {
    let l = pooled.dot(&params.dense.seq_w) + &params.dense.seq_b;
    [l[0], l[1]]
}

pub(crate) fn tok_logits(params: &Parameters, out: &Array2<f64>) -> Array2<f64> {
    out.dot(&params.dense.tok_w) + &params.dense.tok_b
}

fn mask_of(enc: &Encoding) -> Vec<bool> {
    enc.attention_mask.iter().map(|&m| m == 1).collect()
}

/// Sequence-head logits `[negative, positive]` for padded encodings.
pub fn forward_sequence_logits(
    params: &Parameters,
    pooling: Pooling,
    encodings: &[Encoding],
    exec: Exec,
) -> Result<Vec<[f64; 2]>> {
    exec.try_map(encodings, |e| {
        let valid = mask_of(e);
        let cache = encode(params, &e.ids, &valid, ForwardMode::Eval)?;
        Ok(seq_logits(params, &pool(&cache.out, &valid, pooling).vec))
    })
}

/// Token-head logits, one `max_len x 3` matrix per encoding.
pub fn forward_token_logits(params: &Parameters, encodings: &[Encoding], exec: Exec) -> Result<Vec<Array2<f64>>> {
    exec.try_map(encodings, |e| {
        let cache = encode(params, &e.ids, &mask_of(e), ForwardMode::Eval)?;
        Ok(tok_logits(params, &cache.out))
    })
}

/// Mean cross-entropy over a batch of sequence logits.
pub fn sequence_loss(logits: &[[f64; 2]], labels: &[SeqLabel]) -> f64 {
    assert_eq!(logits.len(), labels.len());
    if logits.is_empty() {
        return 0.0;
    }
    let total: f64 = logits.iter().zip(labels).map(|(l, y)| cross_entropy(l, y.class())).sum();
    total / logits.len() as f64
}

/// Mean cross-entropy over every labeled position of a batch. Positions
/// labeled `None` (special pieces, padding) are excluded from the mean.
pub fn token_loss(logits: &[Array2<f64>], tags: &[Vec<Option<Tag>>]) -> f64 {
    assert_eq!(logits.len(), tags.len());
    let mut total = 0.0;
    let mut count = 0usize;
    for (l, t) in logits.iter().zip(tags) {
        for (row, tag) in l.axis_iter(Axis(0)).zip(t) {
            if let Some(tag) = tag {
                total += cross_entropy(row.as_slice().expect("contiguous row"), tag.class());
                count += 1;
            }
        }
    }
    if count == 0 {
        0.0
    } else {
        total / count as f64
    }
}

/// Gradient of the sequence-head logit `target` with respect to the input
/// embeddings of the (unpadded) sequence `ids`, in eval mode. Returns the
/// gradient rows and the logits.
pub(crate) fn input_gradients(
    params: &Parameters,
    pooling: Pooling,
    ids: &[u32],
    target: usize,
) -> Result<(Array2<f64>, [f64; 2])> {
    let valid = vec![true; ids.len()];
    let cache = encode(params, ids, &valid, ForwardMode::Eval)?;
    let pooled = pool(&cache.out, &valid, pooling);
    let logits = seq_logits(params, &pooled.vec);
    let mut dlogits = Array1::zeros(2);
    dlogits[target] = 1.0;
    let dp = params.dense.seq_w.dot(&dlogits);
    let dout = pool_backward(&dp, &pooled, &valid, pooling);
    let mut scratch = Gradients::zeros(params);
    let dx = backward(params, &cache, &dout, &mut scratch);
    Ok((dx, logits))
}
