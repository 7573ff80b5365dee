use super::encoder::{encode, ForwardMode};
use super::heads::{argmax, pool, seq_logits, softmax, tok_logits, Pooling};
use super::params::Parameters;
use crate::corpus::Segment;
use crate::dataset::{SeqExample, SeqLabel, Tag, TokExample};
use crate::eval::PredictionRecord;
use crate::tokenizer::{encode_words, split_words, Vocabulary};
use crate::{Error, Exec, Result};

/// Anything with a segment id and a word sequence can be scored.
pub trait TextItem: Sync {
    fn seg_id(&self) -> &str;
    fn words(&self) -> Vec<String>;
}

fn words_of(text: &str) -> Vec<String> {
    split_words(text).into_iter().map(|w| w.text).collect()
}

impl TextItem for Segment {
    fn seg_id(&self) -> &str {
        &self.seg_id
    }
    fn words(&self) -> Vec<String> {
        words_of(&self.text)
    }
}

impl TextItem for SeqExample {
    fn seg_id(&self) -> &str {
        &self.seg_id
    }
    fn words(&self) -> Vec<String> {
        words_of(&self.text)
    }
}

impl TextItem for TokExample {
    fn seg_id(&self) -> &str {
        &self.seg_id
    }
    fn words(&self) -> Vec<String> {
        self.words.clone()
    }
}

/// Word-level tags from piece-level predictions: a word takes the class of
/// its first piece predicted B or I, and is O when no piece is. Words with
/// no pieces in `word_ids` (cut by truncation) are O.
pub fn word_tags_from_pieces(piece_tags: &[Tag], word_ids: &[Option<u32>], n_words: usize) -> Vec<Tag> {
    let mut out = vec![Tag::O; n_words];
    for (tag, w) in piece_tags.iter().zip(word_ids) {
        if let Some(w) = w {
            let slot = &mut out[*w as usize];
            if *slot == Tag::O && tag.is_spell() {
                *slot = *tag;
            }
        }
    }
    out
}

fn check_vocab(params: &Parameters, vocab: &Vocabulary) -> Result<()> {
    if vocab.len() != params.config.vocab_size {
        return Err(Error::Input(format!(
            "vocabulary has {} pieces but the model expects {}",
            vocab.len(),
            params.config.vocab_size
        )));
    }
    Ok(())
}

/// Label and positive-class probability per item. A probability of exactly
/// 0.5 is labeled negative.
pub fn predict_sequence<T: TextItem>(
    params: &Parameters,
    pooling: Pooling,
    vocab: &Vocabulary,
    items: &[T],
    max_len: usize,
    exec: Exec,
) -> Result<Vec<PredictionRecord>> {
    check_vocab(params, vocab)?;
    exec.try_map(items, |item| {
        let enc = encode_words(&item.words(), vocab, max_len);
        let ids = enc.real_ids();
        let valid = vec![true; ids.len()];
        let cache = encode(params, ids, &valid, ForwardMode::Eval)?;
        let logits = seq_logits(params, &pool(&cache.out, &valid, pooling).vec);
        let probs = softmax(&logits);
        Ok(PredictionRecord {
            seg_id: item.seg_id().to_string(),
            label: Some(SeqLabel::from_bool(argmax(&logits) == 1)),
            positive_probability: Some(probs[1]),
            words: None,
            tags: None,
        })
    })
}

/// Word-level IOB predictions per item.
pub fn predict_tokens<T: TextItem>(
    params: &Parameters,
    vocab: &Vocabulary,
    items: &[T],
    max_len: usize,
    exec: Exec,
) -> Result<Vec<PredictionRecord>> {
    check_vocab(params, vocab)?;
    exec.try_map(items, |item| {
        let words = item.words();
        let enc = encode_words(&words, vocab, max_len);
        let n = enc.real_len();
        let valid = vec![true; n];
        let cache = encode(params, &enc.ids[..n], &valid, ForwardMode::Eval)?;
        let logits = tok_logits(params, &cache.out);
        let piece_tags: Vec<Tag> = logits
            .rows()
            .into_iter()
            .map(|r| Tag::from_class(argmax(r.as_slice().expect("contiguous row"))))
            .collect();
        let tags = word_tags_from_pieces(&piece_tags, &enc.word_ids[..n], words.len());
        Ok(PredictionRecord {
            seg_id: item.seg_id().to_string(),
            label: None,
            positive_probability: None,
            words: Some(words),
            tags: Some(tags),
        })
    })
}
