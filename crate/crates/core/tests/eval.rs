use proptest::prelude::*;
use spellscan::corpus::{Segment, SegmentKind};
use spellscan::dataset::{SeqExample, SeqLabel, Tag, TokExample};
use spellscan::eval::{
    compare_reports, dictionary_baseline, exact_span_true_positives, f1_from_matrix, round_half_up,
    score_sequence_predictions, score_token_predictions_softmatch, ConfusionMatrix, EvalReport, PredictionRecord,
    ReferenceWordlist,
};
use spellscan::spellbook::{MatchMode, SpellLexicon};

#[test]
fn published_matrices_reproduce() {
    for (tp, fp, fn_, tn, f1) in [
        (279, 78, 5, 13_880, 0.8705),
        (111, 42, 1, 14_088, 0.8377),
        (274, 129, 10, 13_829, 0.7977),
    ] {
        let r = f1_from_matrix(ConfusionMatrix::new(tp, fp, fn_, tn));
        assert!((r.f1 - f1).abs() <= 5e-5, "{r:?}");
        assert_eq!(round_half_up(r.f1, 4), f1);
    }
    assert_eq!(f1_from_matrix(ConfusionMatrix::new(0, 0, 0, 5)).f1, 0.0);
}

fn seq_pred(id: &str, positive: bool) -> PredictionRecord {
    PredictionRecord {
        seg_id: id.into(),
        label: Some(SeqLabel::from_bool(positive)),
        positive_probability: None,
        words: None,
        tags: None,
    }
}

fn seq_gold(id: &str, positive: bool) -> SeqExample {
    SeqExample {
        seg_id: id.into(),
        text: String::new(),
        label: SeqLabel::from_bool(positive),
    }
}

fn tok_pred(id: &str, tags: &[Tag]) -> PredictionRecord {
    PredictionRecord {
        seg_id: id.into(),
        label: None,
        positive_probability: None,
        words: None,
        tags: Some(tags.to_vec()),
    }
}

fn tok_gold(id: &str, tags: &[Tag]) -> TokExample {
    TokExample {
        seg_id: id.into(),
        words: tags.iter().map(|_| "w".to_string()).collect(),
        tags: tags.to_vec(),
    }
}

fn pairs() -> impl Strategy<Value = Vec<(bool, bool)>> {
    prop::collection::vec((any::<bool>(), any::<bool>()), 0..200)
}

fn report_for(pairs: &[(bool, bool)]) -> EvalReport {
    let gold: Vec<SeqExample> = pairs.iter().enumerate().map(|(i, p)| seq_gold(&i.to_string(), p.0)).collect();
    // Reversed order: alignment is by id, not position.
    let preds: Vec<PredictionRecord> =
        pairs.iter().enumerate().rev().map(|(i, p)| seq_pred(&i.to_string(), p.1)).collect();
    score_sequence_predictions(&preds, &gold).unwrap()
}

fn tags() -> impl Strategy<Value = Vec<Tag>> {
    prop::collection::vec(prop::sample::select(vec![Tag::O, Tag::O, Tag::B, Tag::I]), 1..12)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn sequence_scores_match_a_direct_tally(pairs in pairs()) {
        let r = report_for(&pairs);
        let count = |g: bool, p: bool| pairs.iter().filter(|&&x| x == (g, p)).count() as u64;
        prop_assert_eq!(r.matrix, ConfusionMatrix::new(count(true, true), count(false, true), count(true, false), count(false, false)));
        let (tp, fp, fn_) = (count(true, true) as f64, count(false, true) as f64, count(true, false) as f64);
        let f1 = if tp == 0.0 { 0.0 } else { 2.0 * tp / (2.0 * tp + fp + fn_) };
        prop_assert!((r.f1 - f1).abs() < 1e-12);
    }

    #[test]
    fn complementing_predictions_swaps_cells(pairs in pairs()) {
        let flipped: Vec<(bool, bool)> = pairs.iter().map(|&(g, p)| (g, !p)).collect();
        let (a, b) = (report_for(&pairs).matrix, report_for(&flipped).matrix);
        prop_assert_eq!((a.tp, a.tn, a.fp, a.fn_), (b.fn_, b.fp, b.tn, b.tp));
    }

    #[test]
    fn soft_match_dominates_exact_match(rows in prop::collection::vec((tags(), tags()), 1..40)) {
        let mut gold = Vec::new();
        let mut preds = Vec::new();
        for (i, (g, p)) in rows.iter().enumerate() {
            let n = g.len().min(p.len());
            gold.push(tok_gold(&i.to_string(), &g[..n]));
            preds.push(tok_pred(&i.to_string(), &p[..n]));
        }
        let soft = score_token_predictions_softmatch(&preds, &gold).unwrap();
        let exact = exact_span_true_positives(&preds, &gold).unwrap();
        prop_assert!(soft.matrix.tp >= exact);
        prop_assert_eq!(soft.matrix.total(), rows.len() as u64);
    }
}

#[test]
fn soft_match_examples() {
    use Tag::*;
    let gold = vec![
        tok_gold("second-only", &[O, B, I, O]),
        tok_gold("punct", &[O, O, O]),
        tok_gold("missed", &[B, O]),
    ];
    let preds = vec![
        tok_pred("second-only", &[O, O, I, O]),
        tok_pred("punct", &[O, O, B]),
        tok_pred("missed", &[O, O]),
    ];
    let r = score_token_predictions_softmatch(&preds, &gold).unwrap();
    assert_eq!(r.matrix, ConfusionMatrix::new(1, 1, 1, 0));
}

#[test]
fn perfect_and_silent_predictions() {
    let pairs: Vec<(bool, bool)> = (0..20).map(|i| (i % 3 == 0, i % 3 == 0)).collect();
    assert_eq!(report_for(&pairs).f1, 1.0);
    let silent: Vec<(bool, bool)> = pairs.iter().map(|&(g, _)| (g, false)).collect();
    assert_eq!(report_for(&silent).f1, 0.0);
}

fn segment(i: usize, text: &str) -> Segment {
    Segment {
        seg_id: format!("d:sentence:{i}"),
        doc_id: "d".into(),
        kind: SegmentKind::Sentence,
        text: text.into(),
        sentence_indices: vec![i],
        oversized: false,
    }
}

#[test]
fn baseline_flags_unknown_words() {
    let common = ReferenceWordlist::new(["the", "he", "ran", "said"]).unwrap();
    let segs = [segment(0, "accio firebolt"), segment(1, "he ran. he said")];
    let r = dictionary_baseline(&segs, &common, hp_lexicon(), MatchMode::Combined).unwrap();
    assert_eq!(r.matrix, ConfusionMatrix::new(1, 0, 0, 1));
}

fn wordlists() -> &'static (ReferenceWordlist, ReferenceWordlist, Vec<String>, Vec<String>) {
    static W: std::sync::OnceLock<(ReferenceWordlist, ReferenceWordlist, Vec<String>, Vec<String>)> =
        std::sync::OnceLock::new();
    W.get_or_init(|| {
        let dir = spellscan::bundled_data_dir();
        let read = |name: &str| -> Vec<String> {
            std::fs::read_to_string(dir.join(name)).unwrap().lines().map(str::to_string).collect()
        };
        let (common, names) = (read("common_english.txt"), read("character_names.txt"));
        let c = ReferenceWordlist::new(common.iter().cloned()).unwrap();
        let both = ReferenceWordlist::new(common.iter().chain(&names).cloned()).unwrap();
        (c, both, common, names)
    })
}

/// A sentence of common words, optionally with a character name and a
/// spell phrase. Names are the only source of false positives.
fn sentence() -> impl Strategy<Value = String> {
    let (_, _, common, names) = wordlists();
    let spells = vec!["expelliarmus", "accio", "the disarming charm", "lumos", "wingardium leviosa"];
    (
        prop::collection::vec(prop::sample::select(common.clone()), 2..8),
        prop::option::weighted(0.4, prop::sample::select(names.clone())),
        prop::option::weighted(0.3, prop::sample::select(spells)),
    )
        .prop_map(|(mut words, name, spell)| {
            if let Some(n) = name {
                words.insert(0, n);
            }
            if let Some(s) = spell {
                words.push(s.to_string());
            }
            words.join(" ") + "."
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn adding_names_never_lowers_precision(lines in prop::collection::vec(sentence(), 1..30)) {
        let lexicon = hp_lexicon();
        let (common, both, _, _) = wordlists();
        let segs: Vec<Segment> = lines.iter().enumerate().map(|(i, t)| segment(i, t)).collect();
        let before = dictionary_baseline(&segs, common, lexicon, MatchMode::Combined).unwrap();
        let after = dictionary_baseline(&segs, both, lexicon, MatchMode::Combined).unwrap();
        prop_assert!(after.precision >= before.precision, "{:?} -> {:?}", before.matrix, after.matrix);
        prop_assert_eq!(after.matrix.fp, 0);
        prop_assert_eq!(after.matrix.tp, before.matrix.tp);
    }
}

fn hp_lexicon() -> &'static SpellLexicon {
    static L: std::sync::OnceLock<SpellLexicon> = std::sync::OnceLock::new();
    L.get_or_init(|| SpellLexicon::load(&spellscan::bundled_data_dir().join("hp_spells.jsonl")).unwrap())
}

#[test]
fn reports_round_trip_and_diff() {
    let a = f1_from_matrix(ConfusionMatrix::new(10, 2, 3, 50));
    let b = f1_from_matrix(ConfusionMatrix::new(12, 1, 1, 51));
    let back: EvalReport = serde_json::from_str(&serde_json::to_string(&a).unwrap()).unwrap();
    assert_eq!(back, a);
    let zero = compare_reports(&a, &a);
    assert_eq!((zero.tp, zero.fp, zero.fn_, zero.tn, zero.f1), (0, 0, 0, 0, 0.0));
    let d = compare_reports(&a, &b);
    assert_eq!(d.f1.signum(), (b.f1 - a.f1).signum());
    assert!(d.f1 > 0.0);
}
