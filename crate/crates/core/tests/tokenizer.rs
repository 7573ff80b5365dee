use std::collections::HashSet;

use proptest::prelude::*;
use spellscan::spellbook::SpellLexicon;
use spellscan::tokenizer::{
    detokenize, encode_segment, extend_vocab, lexicon_words, tokenize_word, Vocabulary, CONTINUATION, UNK,
};

fn desk_vocab() -> Vocabulary {
    Vocabulary::load(&spellscan::bundled_data_dir().join("desk_vocab.txt")).unwrap()
}

fn hp_lexicon() -> SpellLexicon {
    SpellLexicon::load(&spellscan::bundled_data_dir().join("hp_spells.jsonl")).unwrap()
}

/// Scans the whole vocabulary at every position and keeps the longest piece
/// that fits. Shares nothing with the tokenizer's descending-length probe.
fn brute_force(word: &str, vocab: &Vocabulary) -> Vec<String> {
    let chars: Vec<char> = word.chars().collect();
    let mut out = Vec::new();
    let mut pos = 0;
    while pos < chars.len() {
        let rest: String = chars[pos..].iter().collect();
        let mut best: Option<(usize, &str)> = None;
        for piece in vocab.pieces() {
            if piece.starts_with('[') {
                continue;
            }
            let body = match (pos, piece.strip_prefix(CONTINUATION)) {
                (0, Some(_)) => continue,
                (0, None) => piece.as_str(),
                (_, Some(b)) => b,
                (_, None) => continue,
            };
            let n = body.chars().count();
            if n > 0 && rest.starts_with(body) && best.map_or(true, |(m, _)| n > m) {
                best = Some((n, piece));
            }
        }
        match best {
            Some((n, piece)) => {
                out.push(piece.to_string());
                pos += n;
            }
            None => return vec![UNK.to_string()],
        }
    }
    out
}

#[test]
fn bundled_vocabulary_has_the_four_specials() {
    let v = desk_vocab();
    let body = std::fs::read_to_string(spellscan::bundled_data_dir().join("desk_vocab.txt")).unwrap();
    assert_eq!(v.len(), body.lines().count());
    let s = v.special();
    let ids: HashSet<u32> = [s.pad, s.unk, s.cls, s.sep].into_iter().collect();
    assert_eq!(ids.len(), 4);
}

#[test]
fn unseen_spell_fragments_then_becomes_one_piece() {
    let base = desk_vocab();
    let pieces = tokenize_word("sectumsempra", &base);
    assert!(pieces.len() > 1, "{pieces:?}");
    assert!(!pieces[0].starts_with(CONTINUATION));
    assert!(pieces[1..].iter().all(|p| p.starts_with(CONTINUATION)));
    assert_eq!(pieces, brute_force("sectumsempra", &base));

    let (extended, _) = extend_vocab(&base, &hp_lexicon());
    assert_eq!(tokenize_word("sectumsempra", &extended), vec!["sectumsempra"]);
}

#[test]
fn extension_count_is_the_set_difference() {
    let base = desk_vocab();
    let lexicon = hp_lexicon();
    let missing: HashSet<String> = lexicon_words(&lexicon)
        .into_iter()
        .filter(|w| !base.pieces().contains(w))
        .collect();
    let (extended, added) = extend_vocab(&base, &lexicon);
    assert_eq!(added, missing.len());
    assert_eq!(extended.len(), base.len() + added);
    assert_eq!(&extended.pieces()[..base.len()], base.pieces());
    let (_, again) = extend_vocab(&extended, &lexicon);
    assert_eq!(again, 0);
}

#[test]
fn every_lexicon_word_is_one_piece_after_extension() {
    let dir = spellscan::bundled_data_dir();
    for name in ["hp_spells.jsonl", "synthetic_spells.jsonl"] {
        let lexicon = SpellLexicon::load(&dir.join(name)).unwrap();
        let (v, _) = extend_vocab(&desk_vocab(), &lexicon);
        for w in lexicon_words(&lexicon) {
            assert_eq!(tokenize_word(&w, &v), vec![w.clone()], "{name}: {w}");
        }
    }
}

fn word() -> impl Strategy<Value = String> {
    "[a-z]{1,16}"
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn greedy_matches_brute_force(w in word()) {
        let v = desk_vocab_cached();
        prop_assert_eq!(tokenize_word(&w, v), brute_force(&w, v));
    }

    #[test]
    fn detokenize_inverts_tokenize(w in word()) {
        let v = desk_vocab_cached();
        let pieces = tokenize_word(&w, v);
        prop_assume!(pieces != [UNK]);
        prop_assert_eq!(detokenize(&pieces).unwrap(), vec![w]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    /// Small random vocabularies exercise the unknown path and ties the
    /// bundled vocabulary never hits.
    #[test]
    fn greedy_matches_brute_force_on_random_vocabularies(
        pieces in prop::collection::btree_set("(##)?[abc]{1,4}", 1..30),
        w in "[abc]{1,10}",
    ) {
        let mut all: Vec<String> = ["[PAD]", "[UNK]", "[CLS]", "[SEP]"].iter().map(|s| s.to_string()).collect();
        all.extend(pieces);
        let v = Vocabulary::from_pieces(all).unwrap();
        prop_assert_eq!(tokenize_word(&w, &v), brute_force(&w, &v));
    }

    #[test]
    fn encodings_have_fixed_shape_and_monotone_mask(
        words in prop::collection::vec("[a-z]{1,9}|[.,!?]", 0..60),
        max_len in 3usize..80,
    ) {
        let v = desk_vocab_cached();
        let e = encode_segment(&words.join(" "), v, max_len);
        prop_assert_eq!(e.ids.len(), max_len);
        prop_assert_eq!(e.attention_mask.len(), max_len);
        prop_assert!(e.attention_mask.windows(2).all(|w| w[0] >= w[1]));
        let n = e.real_len();
        prop_assert_eq!(e.ids[0], v.special().cls);
        prop_assert_eq!(e.ids[n - 1], v.special().sep);
    }
}

fn desk_vocab_cached() -> &'static Vocabulary {
    static V: std::sync::OnceLock<Vocabulary> = std::sync::OnceLock::new();
    V.get_or_init(desk_vocab)
}
