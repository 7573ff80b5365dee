use proptest::prelude::*;
use spellscan::spellbook::{find_matches, label_segment, Category, MatchMode, MatchSpan, PhraseKind, SpellLexicon};

fn hp() -> &'static SpellLexicon {
    static L: std::sync::OnceLock<SpellLexicon> = std::sync::OnceLock::new();
    L.get_or_init(|| SpellLexicon::load(&spellscan::bundled_data_dir().join("hp_spells.jsonl")).unwrap())
}

#[test]
fn bundled_lexicon_has_known_entries() {
    let accio = hp().entry_for("accio").unwrap();
    assert_eq!(accio.incantation.as_deref(), Some("accio"));
    assert_eq!(accio.names, ["summoning charm"]);
    let hex = hp().entry_for("bat-bogey hex").unwrap();
    assert_eq!(hex.category, Category::NameOnly);
    assert_eq!(hex.incantation, None);
}

#[test]
fn duplicate_phrase_is_rejected() {
    let body = "{\"category\":\"incantation_only\",\"incantation\":\"accio\"}\n\
                {\"category\":\"incantation_only\",\"incantation\":\"Accio\"}\n";
    let err = SpellLexicon::parse(std::path::Path::new("dup.jsonl"), body).unwrap_err();
    assert_eq!(err.kind(), "lexicon");
}

fn phrases(text: &str, mode: MatchMode) -> Vec<String> {
    find_matches(text, hp(), mode).into_iter().map(|s| s.phrase).collect()
}

#[test]
fn labeling_examples() {
    use MatchMode::*;
    assert_eq!(phrases("he shouted wingardium leviosa at the feather", Combined), ["wingardium leviosa"]);
    assert!(phrases("they practised defensive spells all day", Combined).is_empty());
    assert_eq!(phrases("the reductor curse hit the wall", Combined), ["reductor curse"]);
    assert!(phrases("the reductor curse hit the wall", IncantationsOnly).is_empty());
    assert!(label_segment("\"avada kedavra!\" he cried.", hp(), Combined).positive);
    assert!(!label_segment("harry ate breakfast", hp(), Combined).positive);
    assert!(!label_segment("avada -", hp(), Combined).positive);
    assert!(!label_segment("three patronuses circled", hp(), Combined).positive);
}

/// Tries every (offset, phrase) pair of the lexicon at word starts, then
/// keeps the leftmost-longest non-overlapping ones.
fn brute_force(text: &str, lexicon: &SpellLexicon, mode: MatchMode) -> Vec<MatchSpan> {
    let chars: Vec<char> = text.chars().collect();
    let table: Vec<(Vec<char>, PhraseKind, usize)> = lexicon
        .all_phrases()
        .into_iter()
        .filter(|(_, k, _)| k.active(mode))
        .map(|(p, k, e)| (p.chars().collect(), k, e))
        .collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let starts_word = i == 0 || !chars[i - 1].is_alphanumeric();
        let mut best: Option<(usize, PhraseKind, usize)> = None;
        if starts_word {
            for (p, kind, entry) in &table {
                let end = i + p.len();
                let fits = end <= chars.len() && chars[i..end] == p[..];
                let at_edge = end >= chars.len() || !chars[end].is_alphanumeric();
                if fits && at_edge && best.map_or(true, |(e, _, _)| end > e) {
                    best = Some((end, *kind, *entry));
                }
            }
        }
        match best {
            Some((end, kind, entry)) => {
                if kind != PhraseKind::Excluded {
                    out.push(MatchSpan {
                        phrase: chars[i..end].iter().collect(),
                        start: i,
                        end,
                        entry_ref: entry,
                    });
                }
                i = end;
            }
            None => i += 1,
        }
    }
    out
}

fn vocabulary() -> Vec<String> {
    let mut v: Vec<String> = Vec::new();
    for (p, _, _) in hp().all_phrases() {
        v.push(p.clone());
        v.extend(p.split(' ').map(str::to_string));
        let cut: String = p.chars().take(p.chars().count() / 2 + 1).collect();
        v.push(cut);
        v.push(format!("{p}es"));
    }
    for w in ["the", "wand", "he", "said", "charm", "curse", "hex", "spell", "harry", "at", "!", ".", ",", "\"", "-"] {
        v.push(w.to_string());
    }
    v.sort();
    v.dedup();
    v
}

fn segment() -> impl Strategy<Value = String> {
    let words = vocabulary();
    prop::collection::vec(prop::sample::select(words), 1..14)
        .prop_map(|ws| ws.join(" ").chars().take(200).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn matcher_equals_exhaustive_scan(text in segment()) {
        for mode in [MatchMode::IncantationsOnly, MatchMode::Combined] {
            prop_assert_eq!(find_matches(&text, hp(), mode), brute_force(&text, hp(), mode));
        }
    }

    /// A name may extend an incantation ("sectumsempra spell"), so the
    /// narrow spans are covered by, not equal to, the combined ones.
    #[test]
    fn combined_mode_covers_incantation_spans(text in segment()) {
        let narrow = find_matches(&text, hp(), MatchMode::IncantationsOnly);
        let wide = find_matches(&text, hp(), MatchMode::Combined);
        for s in &narrow {
            prop_assert!(
                wide.iter().any(|w| w.start <= s.start && s.end <= w.end),
                "{:?} not covered by {:?}", s, wide
            );
        }
        prop_assert!(narrow.is_empty() || !wide.is_empty());
        prop_assert_eq!(find_matches(&text, hp(), MatchMode::Combined), wide);
    }
}
