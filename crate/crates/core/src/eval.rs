//! Confusion matrices, F1 and the scoring rules for both tasks.
//!
//! Precision and recall are 0 when their denominator is 0, and F1 is 0 when
//! both are. Reports keep full precision; [`round_half_up`] produces the
//! four-decimal figures used for display.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::corpus::Segment;
use crate::dataset::{SeqExample, SeqLabel, Tag, TokExample};
use crate::spellbook::{label_segment, MatchMode, SpellLexicon};
use crate::tokenizer::split_words;
use crate::{artifact, Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        ConfusionMatrix { tp, fp, fn_, tn }
    }

    pub fn record(&mut self, gold: bool, predicted: bool) {
        match (gold, predicted) {
            (true, true) => self.tp += 1,
            (false, true) => self.fp += 1,
            (true, false) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r > 0.0 {
            2.0 * p * r / (p + r)
        } else {
            0.0
        }
    }

    pub fn report(&self) -> EvalReport {
        f1_from_matrix(*self)
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Rounds to `places` decimals with halves going away from zero.
pub fn round_half_up(x: f64, places: u32) -> f64 {
    let scale = 10f64.powi(places as i32);
    // The nudge keeps values like 0.86945 (stored as 0.869449999...) from
    // rounding down.
    (x * scale + 1e-9_f64.copysign(x)).round() / scale
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalTask {
    Sequence,
    TokenSoftmatch,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: EvalTask,
    pub matrix: ConfusionMatrix,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    #[serde(default)]
    pub config: Value,
}

impl EvalReport {
    pub fn with_task(mut self, task: EvalTask) -> Self {
        self.task = task;
        self
    }

    pub fn with_config(mut self, config: Value) -> Self {
        self.config = config;
        self
    }

    /// One-line summary with four-decimal metrics.
    pub fn summary(&self) -> String {
        let m = &self.matrix;
        format!(
            "tp={} fp={} fn={} tn={} precision={:.4} recall={:.4} f1={:.4}",
            m.tp,
            m.fp,
            m.fn_,
            m.tn,
            round_half_up(self.precision, 4),
            round_half_up(self.recall, 4),
            round_half_up(self.f1, 4)
        )
    }
}

pub fn f1_from_matrix(m: ConfusionMatrix) -> EvalReport {
    EvalReport {
        task: EvalTask::Sequence,
        matrix: m,
        precision: m.precision(),
        recall: m.recall(),
        f1: m.f1(),
        config: Value::Null,
    }
}

/// One prediction per segment; sequence and token predictions use
/// different optional fields.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub seg_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<SeqLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positive_probability: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub words: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tags: Option<Vec<Tag>>,
}

/// Pairs every gold id with its prediction, or fails listing missing,
/// extra and duplicate ids.
fn align<'a>(preds: &'a [PredictionRecord], gold_ids: &[&str]) -> Result<Vec<&'a PredictionRecord>> {
    let mut by_id: HashMap<&str, &PredictionRecord> = HashMap::with_capacity(preds.len());
    let mut duplicates = BTreeSet::new();
    for p in preds {
        if by_id.insert(p.seg_id.as_str(), p).is_some() {
            duplicates.insert(p.seg_id.clone());
        }
    }
    let gold_set: BTreeSet<&str> = gold_ids.iter().copied().collect();
    let missing: Vec<&str> = gold_ids.iter().copied().filter(|id| !by_id.contains_key(id)).collect();
    let mut extra: Vec<&str> = by_id.keys().copied().filter(|id| !gold_set.contains(id)).collect();
    extra.sort_unstable();
    if !missing.is_empty() || !extra.is_empty() || !duplicates.is_empty() {
        return Err(Error::Alignment(format!(
            "missing predictions for [{}]; predictions without gold [{}]; duplicate predictions [{}]",
            missing.join(", "),
            extra.join(", "),
            duplicates.into_iter().collect::<Vec<_>>().join(", ")
        )));
    }
    Ok(gold_ids.iter().map(|id| by_id[id]).collect())
}

pub fn score_sequence_predictions(preds: &[PredictionRecord], gold: &[SeqExample]) -> Result<EvalReport> {
    let ids: Vec<&str> = gold.iter().map(|g| g.seg_id.as_str()).collect();
    let aligned = align(preds, &ids)?;
    let mut m = ConfusionMatrix::default();
    for (p, g) in aligned.into_iter().zip(gold) {
        let label = p
            .label
            .ok_or_else(|| Error::Alignment(format!("prediction for {} has no sequence label", p.seg_id)))?;
        m.record(g.label.is_positive(), label.is_positive());
    }
    Ok(m.report())
}

/// `(gold positive, predicted positive)` for one sequence under soft
/// matching. A gold-positive sequence is predicted positive when any word
/// inside a gold span is tagged B or I; a gold-negative one when any word is.
pub fn softmatch_outcome(gold: &[Tag], pred: &[Tag]) -> (bool, bool) {
    let gold_positive = gold.iter().any(|t| t.is_spell());
    let hit = if gold_positive {
        gold.iter().zip(pred).any(|(g, p)| g.is_spell() && p.is_spell())
    } else {
        pred.iter().any(|p| p.is_spell())
    };
    (gold_positive, hit)
}

fn aligned_tags<'a>(preds: &'a [PredictionRecord], gold: &[TokExample]) -> Result<Vec<&'a [Tag]>> {
    let ids: Vec<&str> = gold.iter().map(|g| g.seg_id.as_str()).collect();
    let aligned = align(preds, &ids)?;
    let mut out = Vec::with_capacity(gold.len());
    for (p, g) in aligned.into_iter().zip(gold) {
        let tags = p
            .tags
            .as_deref()
            .ok_or_else(|| Error::Alignment(format!("prediction for {} has no word tags", p.seg_id)))?;
        if tags.len() != g.tags.len() {
            return Err(Error::Alignment(format!(
                "{}: {} predicted word tags for {} gold words",
                g.seg_id,
                tags.len(),
                g.tags.len()
            )));
        }
        out.push(tags);
    }
    Ok(out)
}

pub fn score_token_predictions_softmatch(preds: &[PredictionRecord], gold: &[TokExample]) -> Result<EvalReport> {
    let tags = aligned_tags(preds, gold)?;
    let mut m = ConfusionMatrix::default();
    for (p, g) in tags.into_iter().zip(gold) {
        let (gold_pos, pred_pos) = softmatch_outcome(&g.tags, p);
        m.record(gold_pos, pred_pos);
    }
    Ok(m.report().with_task(EvalTask::TokenSoftmatch))
}

/// Gold spans as `[start, end)` word ranges: a B or stray I opens a span,
/// following I's extend it.
fn spans(tags: &[Tag]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < tags.len() {
        if tags[i].is_spell() {
            let start = i;
            i += 1;
            while i < tags.len() && tags[i] == Tag::I {
                i += 1;
            }
            out.push((start, i));
        } else {
            i += 1;
        }
    }
    out
}

/// Sequences counted TP under exact span matching: some gold span is
/// reproduced tag for tag and not continued by a predicted I.
pub fn exact_span_true_positives(preds: &[PredictionRecord], gold: &[TokExample]) -> Result<u64> {
    let tags = aligned_tags(preds, gold)?;
    let mut tp = 0;
    for (p, g) in tags.into_iter().zip(gold) {
        let hit = spans(&g.tags).into_iter().any(|(s, e)| {
            p[s..e] == g.tags[s..e] && p.get(e) != Some(&Tag::I)
        });
        if hit {
            tp += 1;
        }
    }
    Ok(tp)
}

/// Lowercase words treated as known vocabulary by the dictionary baseline.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReferenceWordlist {
    words: BTreeSet<String>,
}

impl ReferenceWordlist {
    pub fn new<I, S>(words: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let words: BTreeSet<String> = words
            .into_iter()
            .map(|w| w.as_ref().trim().to_lowercase())
            .filter(|w| !w.is_empty())
            .collect();
        if words.is_empty() {
            return Err(Error::Input("reference wordlist is empty".into()));
        }
        Ok(ReferenceWordlist { words })
    }

    /// One word per line; blank lines and lines starting with `#` are skipped.
    pub fn parse(body: &str) -> Result<Self> {
        Self::new(body.lines().filter(|l| !l.trim_start().starts_with('#')))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&artifact::read_to_string(path)?).map_err(|e| match e {
            Error::Input(m) => Error::Input(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Union of several lists, e.g. common English plus character names.
    pub fn merge(lists: &[ReferenceWordlist]) -> Result<Self> {
        Self::new(lists.iter().flat_map(|l| l.words.iter()))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// True if the text has an alphabetic word missing from the wordlist.
pub fn has_novel_word(text: &str, wordlist: &ReferenceWordlist) -> bool {
    split_words(text)
        .iter()
        .any(|w| w.text.chars().all(char::is_alphabetic) && !wordlist.contains(&w.text.to_lowercase()))
}

/// Out-of-vocabulary novelty detector scored against lexicon gold labels.
pub fn dictionary_baseline(
    segments: &[Segment],
    wordlist: &ReferenceWordlist,
    lexicon: &SpellLexicon,
    mode: MatchMode,
) -> Result<EvalReport> {
    if wordlist.is_empty() {
        return Err(Error::Input("reference wordlist is empty".into()));
    }
    let mut m = ConfusionMatrix::default();
    for s in segments {
        let gold = label_segment(&s.text, lexicon, mode).positive;
        m.record(gold, has_novel_word(&s.text, wordlist));
    }
    Ok(m.report())
}

/// `b - a`, field by field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportDelta {
    pub tp: i64,
    pub fp: i64,
    #[serde(rename = "fn")]
    pub fn_: i64,
    pub tn: i64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn compare_reports(a: &EvalReport, b: &EvalReport) -> ReportDelta {
    let d = |x: u64, y: u64| y as i64 - x as i64;
    ReportDelta {
        tp: d(a.matrix.tp, b.matrix.tp),
        fp: d(a.matrix.fp, b.matrix.fp),
        fn_: d(a.matrix.fn_, b.matrix.fn_),
        tn: d(a.matrix.tn, b.matrix.tn),
        precision: b.precision - a.precision,
        recall: b.recall - a.recall,
        f1: b.f1 - a.f1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use Tag::{B, I, O};

    fn tok(id: &str, tags: Vec<Tag>) -> TokExample {
        TokExample {
            seg_id: id.into(),
            words: (0..tags.len()).map(|i| format!("w{i}")).collect(),
            tags,
        }
    }

    fn pred(id: &str, tags: Vec<Tag>) -> PredictionRecord {
        PredictionRecord {
            seg_id: id.into(),
            label: None,
            positive_probability: None,
            words: None,
            tags: Some(tags),
        }
    }

    #[test]
    fn empty_positive_class_scores_zero() {
        let r = f1_from_matrix(ConfusionMatrix::new(0, 0, 0, 5));
        assert_eq!((r.precision, r.recall, r.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn half_up_rounding() {
        assert_eq!(round_half_up(0.86945, 4), 0.8695);
        assert_eq!(round_half_up(0.12344, 4), 0.1234);
        assert_eq!(round_half_up(1.0, 4), 1.0);
    }

    #[test]
    fn soft_match_rules() {
        let gold = vec![tok("a", vec![O, B, I, O]), tok("b", vec![O, O, O]), tok("c", vec![B, I])];
        let preds = vec![
            pred("a", vec![O, O, I, O]),
            pred("b", vec![O, O, B]),
            pred("c", vec![O, O]),
        ];
        let r = score_token_predictions_softmatch(&preds, &gold).unwrap();
        assert_eq!(r.matrix, ConfusionMatrix::new(1, 1, 1, 0));
        assert_eq!(r.task, EvalTask::TokenSoftmatch);
    }

    #[test]
    fn tagging_outside_the_gold_span_is_not_a_hit() {
        assert_eq!(softmatch_outcome(&[B, O, O], &[O, O, B]), (true, false));
    }

    #[test]
    fn alignment_errors_list_ids() {
        let gold = vec![tok("a", vec![O]), tok("b", vec![O])];
        let preds = vec![pred("a", vec![O]), pred("z", vec![O])];
        let msg = score_token_predictions_softmatch(&preds, &gold).unwrap_err().to_string();
        assert!(msg.contains('b') && msg.contains('z'), "{msg}");
        let short = vec![pred("a", vec![O]), pred("b", vec![O, O])];
        assert!(matches!(score_token_predictions_softmatch(&short, &gold), Err(Error::Alignment(_))));
    }

    #[test]
    fn exact_spans() {
        let gold = vec![tok("a", vec![O, B, I, O])];
        assert_eq!(exact_span_true_positives(&[pred("a", vec![O, B, I, O])], &gold).unwrap(), 1);
        assert_eq!(exact_span_true_positives(&[pred("a", vec![O, B, I, I])], &gold).unwrap(), 0);
        assert_eq!(exact_span_true_positives(&[pred("a", vec![O, B, O, O])], &gold).unwrap(), 0);
    }

    #[test]
    fn wordlist_rules() {
        assert!(ReferenceWordlist::new(Vec::<String>::new()).is_err());
        let wl = ReferenceWordlist::parse("# common\nthe\nWand\n\n").unwrap();
        assert_eq!(wl.len(), 2);
        assert!(has_novel_word("accio firebolt", &wl));
        assert!(!has_novel_word("the wand!", &wl));
        assert!(!has_novel_word("the 1997 wand", &wl));
    }

    #[test]
    fn deltas() {
        let a = f1_from_matrix(ConfusionMatrix::new(279, 78, 5, 13880));
        let b = f1_from_matrix(ConfusionMatrix::new(278, 75, 6, 13883));
        assert_eq!(compare_reports(&a, &a).f1, 0.0);
        let d = compare_reports(&a, &b);
        assert_eq!((d.tp, d.fp, d.fn_, d.tn), (-1, -3, 1, 3));
        assert_eq!(d.f1, b.f1 - a.f1);
    }
}
