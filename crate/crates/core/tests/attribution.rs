use std::collections::HashSet;

use proptest::prelude::*;
use spellscan::attribution::{attribute_all, attribute_sequence, render_all, render_html_document, RenderFormat};
use spellscan::dataset::{SeqExample, SeqLabel};
use spellscan::model::{init_params, prepare_sequence, train, ModelConfig, Parameters, Pooling, TrainConfig};
use spellscan::spellbook::SpellLexicon;
use spellscan::tokenizer::{encode_words, extend_vocab, lexicon_words, Vocabulary};
use spellscan::{synth, Exec};

fn lexicon() -> &'static SpellLexicon {
    static L: std::sync::OnceLock<SpellLexicon> = std::sync::OnceLock::new();
    L.get_or_init(|| SpellLexicon::load(&spellscan::bundled_data_dir().join("synthetic_spells.jsonl")).unwrap())
}

fn vocab() -> &'static Vocabulary {
    static V: std::sync::OnceLock<Vocabulary> = std::sync::OnceLock::new();
    V.get_or_init(|| {
        let desk = Vocabulary::load(&spellscan::bundled_data_dir().join("desk_vocab.txt")).unwrap();
        extend_vocab(&desk, lexicon()).0
    })
}

fn small(layers: usize, final_layer_norm: bool) -> ModelConfig {
    ModelConfig {
        layers,
        hidden: 24,
        heads: 2,
        ffn: 48,
        vocab_size: vocab().len(),
        max_positions: 48,
        dropout: 0.0,
        final_layer_norm,
    }
}

fn example(text: &str) -> SeqExample {
    SeqExample {
        seg_id: "x".into(),
        text: text.into(),
        label: SeqLabel::Positive,
    }
}

fn sentence() -> impl Strategy<Value = String> {
    let mut words = synth::common_words();
    words.truncate(200);
    words.extend(lexicon_words(lexicon()));
    words.extend(["!", ",", "\"", "zzyzx"].map(String::from));
    prop::collection::vec(prop::sample::select(words), 1..20).prop_map(|w| w.join(" "))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn weights_are_bounded_complete_and_deterministic(
        text in sentence(),
        seed in 0u64..50,
        pooling in prop::sample::select(vec![Pooling::Cls, Pooling::Mean, Pooling::Max]),
    ) {
        let params = init_params(&small(1, true), seed).unwrap();
        let ex = example(&text);
        for target in [SeqLabel::Positive, SeqLabel::Negative] {
            let r = attribute_sequence(&params, pooling, &ex, vocab(), target, 48).unwrap();
            let enc = encode_words(&spellscan::model::TextItem::words(&ex), vocab(), 48);
            let real: Vec<&String> = (0..enc.real_len())
                .filter(|&i| enc.word_ids[i].is_some())
                .map(|i| &enc.pieces[i])
                .collect();
            let got: Vec<&String> = r.attributions.iter().map(|a| &a.piece).collect();
            prop_assert_eq!(got, real);
            prop_assert!(r.attributions.iter().all(|a| (-1.0..=1.0).contains(&a.weight)));
            prop_assert!(r.attributions.iter().any(|a| a.weight.abs() == 1.0));
            let sum: f64 = r.attributions.iter().map(|a| a.weight).sum();
            prop_assert!((r.attribution_score - sum).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&r.predicted_probability));
            let again = attribute_sequence(&params, pooling, &ex, vocab(), target, 48).unwrap();
            prop_assert_eq!(again, r);
        }
    }

    /// With no attention layers, no final norm and mean pooling, the target
    /// logit is linear in each embedding, so every raw attribution equals
    /// `w_target . e_i / n`.
    #[test]
    fn linear_model_weights_have_a_closed_form(text in sentence(), seed in 0u64..50, positive in any::<bool>()) {
        let params = init_params(&small(0, false), seed).unwrap();
        let target = SeqLabel::from_bool(positive);
        let ex = example(&text);
        let r = attribute_sequence(&params, Pooling::Mean, &ex, vocab(), target, 48).unwrap();
        let enc = encode_words(&spellscan::model::TextItem::words(&ex), vocab(), 48);
        let w = params.dense.seq_w.column(target.class());
        let n = enc.real_len() as f64;
        let raw: Vec<f64> = (0..enc.real_len())
            .filter(|&i| enc.word_ids[i].is_some())
            .map(|i| w.dot(&params.token_emb.row(enc.ids[i] as usize)) / n)
            .collect();
        let max = raw.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        prop_assert_eq!(raw.len(), r.attributions.len());
        for (expected, a) in raw.iter().zip(&r.attributions) {
            prop_assert!((expected / max - a.weight).abs() < 1e-9, "{} vs {}", expected / max, a.weight);
            if expected.abs() > 1e-9 * max {
                prop_assert_eq!(expected.signum(), a.weight.signum());
            }
        }
    }
}

/// One layer without the final LayerNorm: a norm right before pooling makes
/// the logit invariant to the scale of each hidden row, which cancels
/// gradient x input on the embeddings and leaves the weights meaningless.
fn trained_on_contrast() -> (Parameters, Vec<SeqExample>) {
    let set = synth::contrast_examples(lexicon(), 40, 5);
    let prepared: Vec<_> = set.iter().map(|e| prepare_sequence(e, vocab(), 48)).collect();
    let mut params = init_params(&small(1, false), 3).unwrap();
    let cfg = TrainConfig {
        epochs: 30,
        batch_size: 8,
        learning_rate: 3e-3,
        max_len: 48,
        ..TrainConfig::default()
    };
    train(&mut params, Pooling::Mean, &prepared, &[], &cfg, Exec::Parallel).unwrap();
    (params, set)
}

#[test]
fn spell_pieces_carry_the_strongest_positive_weight() {
    let (params, set) = trained_on_contrast();
    let spell_words: HashSet<String> = lexicon_words(lexicon()).into_iter().collect();
    let positives: Vec<SeqExample> = set.into_iter().filter(|e| e.label.is_positive()).collect();
    let reports = attribute_all(&params, Pooling::Mean, &positives, vocab(), SeqLabel::Positive, 48, Exec::Parallel)
        .unwrap();
    for (ex, r) in positives.iter().zip(&reports) {
        assert_eq!(r.predicted_label, SeqLabel::Positive, "{}", ex.text);
        let words = spellscan::model::TextItem::words(ex);
        let top = r.attributions.iter().max_by(|a, b| a.weight.total_cmp(&b.weight)).unwrap();
        assert_eq!(top.weight, 1.0, "{}", ex.text);
        let word = &words[top.word_id.unwrap() as usize];
        assert!(spell_words.contains(word), "{}: top piece {} of {word}", ex.text, top.piece);
    }
}

#[test]
fn renderings_are_well_formed() {
    let params = init_params(&small(1, true), 9).unwrap();
    let items = [
        example("she shouted \"lumenara!\" & ran <fast>"),
        example("nothing 'odd' here"),
    ];
    let reports =
        attribute_all(&params, Pooling::Mean, &items, vocab(), SeqLabel::Positive, 48, Exec::Sequential).unwrap();
    let html = render_html_document(&reports);
    let doc = roxmltree::Document::parse(&html).unwrap();
    let spans = doc.descendants().filter(|n| n.has_tag_name("span")).count();
    assert_eq!(spans, reports.iter().map(|r| r.attributions.len()).sum::<usize>());
    assert_eq!(doc.descendants().filter(|n| n.has_tag_name("section")).count(), 2);
    assert_eq!(render_all(&reports, RenderFormat::Html), html);

    let ansi = render_all(&reports, RenderFormat::Ansi);
    assert!(ansi.contains("\x1b[48;2;"));
    assert!(ansi.lines().filter(|l| l.starts_with("x: attribute label positive")).count() == 2);
}
