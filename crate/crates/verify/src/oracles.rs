use std::collections::BTreeMap;

use spellscan::corpus::{segment_corpus, split_paragraphs, split_sentences, DocRole, RawDocument, SplitStrategy};
use spellscan::dataset::{SeqLabel, Tag, TokExample};
use spellscan::eval::{score_token_predictions_softmatch, ConfusionMatrix, PredictionRecord};
use spellscan::model::{batch_loss, batch_loss_and_gradients, init_params, Example, ModelConfig, Parameters, Pooling, Target};
use spellscan::rng::SplitMix64;
use spellscan::spellbook::{find_matches, MatchMode, MatchSpan, PhraseKind, SpellLexicon};
use spellscan::synth::{generate_texts, SynthConfig};
use spellscan::tokenizer::{
    count_tokens, detokenize, extend_vocab, lexicon_words, tokenize_word, Vocabulary, CONTINUATION, UNK,
};
use spellscan::Exec;

use crate::{ensure, Check};

fn uniform(rng: &mut SplitMix64) -> f64 {
    (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

pub const GRAD_REL_TOL: f64 = 1e-4;
pub const GRAD_SAMPLES_PER_TYPE: usize = 200;
const GRAD_STEP: f64 = 1e-5;

fn grad_params() -> Parameters {
    let cfg = ModelConfig {
        layers: 2,
        hidden: 8,
        heads: 2,
        ffn: 16,
        vocab_size: 24,
        max_positions: 12,
        dropout: 0.1,
        final_layer_norm: true,
    };
    // Pushed off the near-zero init so every nonlinearity contributes.
    let mut p = init_params(&cfg, 1).expect("valid config");
    let mut rng = SplitMix64::new(1);
    for (_, t) in p.tensors_mut() {
        t.iter_mut().for_each(|x| *x += uniform(&mut rng) - 0.5);
    }
    p
}

fn seq_example(ids: Vec<u32>, positive: bool) -> Example {
    Example {
        seg_id: "s".into(),
        ids,
        target: Target::Sequence(SeqLabel::from_bool(positive)),
    }
}

fn tok_example(ids: Vec<u32>, tags: Vec<Option<Tag>>) -> Example {
    Example {
        seg_id: "t".into(),
        ids,
        target: Target::Token {
            word_ids: (0..tags.len()).map(|i| Some(i as u32)).collect(),
            word_tags: tags.iter().map(|t| t.unwrap_or(Tag::O)).collect(),
            piece_tags: tags,
        },
    }
}

/// "layer1.wq" and "layer0.wq" are the same layer type.
fn layer_type(name: &str) -> &str {
    match name.split_once('.') {
        Some((prefix, rest)) if prefix.starts_with("layer") => rest,
        _ => name,
    }
}

struct GradStats {
    checked: usize,
    types: usize,
    worst: f64,
    failures: Vec<String>,
}

fn grad_pass(params: &Parameters, pooling: Pooling, batch: &[Example], seed: Option<u64>, skip: &str, stats: &mut GradStats) {
    let (_, grads) = batch_loss_and_gradients(params, pooling, batch, seed, Exec::Sequential).expect("valid batch");
    let mut by_type: BTreeMap<String, Vec<(String, usize)>> = BTreeMap::new();
    for (name, t) in params.tensors() {
        if name.starts_with(skip) {
            continue;
        }
        let entry = by_type.entry(layer_type(&name).to_string()).or_default();
        entry.extend((0..t.len()).map(|i| (name.clone(), i)));
    }
    let mut rng = SplitMix64::new(99);
    stats.types = stats.types.max(by_type.len());
    for coords in by_type.into_values() {
        let chosen = if coords.len() <= GRAD_SAMPLES_PER_TYPE {
            coords
        } else {
            rng.sample(&coords, GRAD_SAMPLES_PER_TYPE)
        };
        for (name, index) in chosen {
            let analytic = grads.get(&name, index).expect("known tensor");
            let loss_at = |delta: f64| {
                let mut q = params.clone();
                for (n, t) in q.tensors_mut() {
                    if n == name {
                        t[index] += delta;
                    }
                }
                batch_loss(&q, pooling, batch, seed).expect("valid batch")
            };
            let numeric = (loss_at(GRAD_STEP) - loss_at(-GRAD_STEP)) / (2.0 * GRAD_STEP);
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
            stats.worst = stats.worst.max(rel);
            if rel > GRAD_REL_TOL {
                stats.failures.push(format!("{name}[{index}]: {analytic:e} vs {numeric:e}"));
            }
            stats.checked += 1;
        }
    }
}

/// Analytic gradients against central differences for both heads, every
/// pooling, with and without a dropout mask.
pub fn gradient_check() -> Check {
    use Tag::{B, I, O};
    let params = grad_params();
    let seq = vec![
        seq_example(vec![2, 7, 9, 11, 3], true),
        seq_example(vec![2, 5, 5, 20, 13, 17, 3], false),
        seq_example(vec![2, 23, 3], true),
    ];
    let tok = vec![
        tok_example(vec![2, 6, 8, 10, 12, 3], vec![None, Some(O), Some(B), Some(I), Some(O), None]),
        tok_example(vec![2, 14, 15, 3], vec![None, Some(B), Some(O), None]),
    ];
    let mut stats = GradStats {
        checked: 0,
        types: 0,
        worst: 0.0,
        failures: Vec::new(),
    };
    for pooling in [Pooling::Cls, Pooling::Mean, Pooling::Max] {
        grad_pass(&params, pooling, &seq, None, "tok_head", &mut stats);
    }
    grad_pass(&params, Pooling::Mean, &seq, Some(7), "tok_head", &mut stats);
    grad_pass(&params, Pooling::Mean, &tok, None, "seq_head", &mut stats);
    grad_pass(&params, Pooling::Mean, &tok, Some(8), "seq_head", &mut stats);
    let summary = format!(
        "{} coordinates over {} layer types, worst relative error {:.2e}",
        stats.checked, stats.types, stats.worst
    );
    if stats.failures.is_empty() {
        Ok(summary)
    } else {
        Err(format!("{summary}; {} above {GRAD_REL_TOL:e}: {}", stats.failures.len(), stats.failures[..stats.failures.len().min(3)].join(", ")))
    }
}

/// Scans every vocabulary piece at each position and keeps the longest that
/// fits; shares nothing with the tokenizer's descending-length probe.
pub fn brute_force_pieces(word: &str, vocab: &Vocabulary) -> Vec<String> {
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
                (0, Some(_)) | (1.., None) => continue,
                (0, None) => piece.as_str(),
                (_, Some(b)) => b,
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

fn random_word(rng: &mut SplitMix64, alphabet: &[char]) -> String {
    let len = 1 + rng.below(14) as usize;
    (0..len).map(|_| alphabet[rng.below(alphabet.len() as u64) as usize]).collect()
}

/// Greedy maximality and round trip on `words` random words, then the
/// single-piece guarantee after extension for every lexicon.
pub fn tokenizer_properties(vocab: &Vocabulary, lexicons: &[&SpellLexicon], words: usize) -> Check {
    let mut rng = SplitMix64::new(2024);
    // Plain lowercase words, and one in five drawn with digits and
    // characters the vocabulary may lack.
    let letters: Vec<char> = "abcdefghijklmnopqrstuvwxyzaeiouaeiou".chars().collect();
    let wide: Vec<char> = "abcdefghijklmnopqrstuvwxyz0123456789éß".chars().collect();
    let mut unknown = 0;
    for n in 0..words {
        let w = random_word(&mut rng, if n % 5 == 4 { &wide } else { &letters });
        let pieces = tokenize_word(&w, vocab);
        let expected = brute_force_pieces(&w, vocab);
        ensure(pieces == expected, || format!("{w:?}: greedy {pieces:?}, brute force {expected:?}"))?;
        if pieces == [UNK] {
            unknown += 1;
            continue;
        }
        let back = detokenize(&pieces).map_err(|e| e.to_string())?;
        ensure(back == [w.clone()], || format!("{w:?}: detokenized to {back:?}"))?;
    }
    let mut lexicon_total = 0;
    for lexicon in lexicons {
        let (extended, _) = extend_vocab(vocab, lexicon);
        for w in lexicon_words(lexicon) {
            let pieces = tokenize_word(&w, &extended);
            ensure(pieces == [w.clone()], || format!("{w:?} is {pieces:?} after extension"))?;
            lexicon_total += 1;
        }
    }
    Ok(format!(
        "{words} random words ({unknown} unknown), {lexicon_total} lexicon words single-piece after extension"
    ))
}

fn char_counts<'a>(texts: impl Iterator<Item = &'a str>) -> BTreeMap<char, usize> {
    let mut m = BTreeMap::new();
    for t in texts {
        for c in t.chars().filter(|c| !c.is_whitespace()) {
            *m.entry(c).or_insert(0) += 1;
        }
    }
    m
}

/// Coverage, monotone counts and packing tightness on `documents`
/// generated chapters. Paragraph count bounds the pack count only when
/// every paragraph fits the budget; the check is skipped otherwise.
pub fn segmentation_properties(vocab: &Vocabulary, lexicon: &SpellLexicon, documents: u64) -> Check {
    let mut monotone_checked = 0;
    for seed in 0..documents {
        let cfg = SynthConfig {
            documents: 1,
            paragraphs_per_doc: (1, 12),
            sentences_per_paragraph: (1, 8),
            spell_rate: 0.1,
            seed: 10_000 + seed,
        };
        let text = &generate_texts(&cfg, Some(lexicon))[0];
        let doc = RawDocument::new(format!("d{seed}"), text, DocRole::Train).map_err(|e| e.to_string())?;
        let max_tokens = [16, 64, 384][seed as usize % 3];
        let source = char_counts(std::iter::once(doc.text.as_str()));
        let strategies = [
            SplitStrategy::SentenceSplit,
            SplitStrategy::ParagraphSplit,
            SplitStrategy::sequence(max_tokens).map_err(|e| e.to_string())?,
        ];
        let mut counts = [0usize; 3];
        let mut packs = Vec::new();
        for (k, s) in strategies.into_iter().enumerate() {
            let segs = segment_corpus(std::slice::from_ref(&doc), s, Some(vocab), Exec::Sequential)
                .map_err(|e| e.to_string())?;
            ensure(char_counts(segs.iter().map(|s| s.text.as_str())) == source, || {
                format!("seed {seed}: {s:?} does not cover the document")
            })?;
            counts[k] = segs.len();
            packs = segs;
        }
        ensure(counts[0] >= counts[1], || format!("seed {seed}: fewer sentences than paragraphs"))?;
        let fits = split_paragraphs(&doc).iter().all(|p| count_tokens(&p.text, vocab) <= max_tokens);
        if fits {
            ensure(counts[1] >= counts[2], || format!("seed {seed}: fewer paragraphs than packs"))?;
            monotone_checked += 1;
        }
        let sentence_tokens: Vec<usize> = split_sentences(&doc).iter().map(|s| count_tokens(&s.text, vocab)).collect();
        for (i, pack) in packs.iter().enumerate() {
            let used: usize = pack.sentence_indices.iter().map(|&j| sentence_tokens[j]).sum();
            ensure(pack.oversized == (used > max_tokens), || format!("seed {seed}: pack {i} oversized flag"))?;
            if let Some(next) = packs.get(i + 1) {
                let j = next.sentence_indices[0];
                ensure(used + sentence_tokens[j] > max_tokens, || {
                    format!("seed {seed}: pack {i} could have taken sentence {j}")
                })?;
            }
        }
    }
    Ok(format!(
        "{documents} documents; paragraph >= pack count checked on {monotone_checked} where paragraphs fit"
    ))
}

/// Tries every (offset, phrase) pair at word starts and keeps the
/// leftmost-longest non-overlapping matches.
pub fn brute_force_matches(text: &str, lexicon: &SpellLexicon, mode: MatchMode) -> Vec<MatchSpan> {
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

fn labeling_words(lexicon: &SpellLexicon) -> Vec<String> {
    let mut v: Vec<String> = Vec::new();
    for (p, _, _) in lexicon.all_phrases() {
        v.extend(p.split(' ').map(str::to_string));
        let half: String = p.chars().take(p.chars().count() / 2 + 1).collect();
        v.push(half);
        v.push(format!("{p}es"));
        v.push(p);
    }
    for w in ["the", "wand", "he", "said", "charm", "curse", "spell", "at", "!", ".", ",", "\"", "-"] {
        v.push(w.to_string());
    }
    v.sort();
    v.dedup();
    v
}

/// Matcher against the exhaustive scan on `segments` random segments, plus
/// mode monotonicity: every incantation-mode span lies inside a combined
/// span, so a segment positive under the narrow mode stays positive.
pub fn labeling_properties(lexicon: &SpellLexicon, segments: usize) -> Check {
    let words = labeling_words(lexicon);
    let mut rng = SplitMix64::new(77);
    let mut positives = 0;
    for n in 0..segments {
        let len = 1 + rng.below(14) as usize;
        let text: String = (0..len)
            .map(|_| words[rng.below(words.len() as u64) as usize].as_str())
            .collect::<Vec<_>>()
            .join(" ");
        for mode in [MatchMode::IncantationsOnly, MatchMode::Combined] {
            let got = find_matches(&text, lexicon, mode);
            let expected = brute_force_matches(&text, lexicon, mode);
            ensure(got == expected, || format!("segment {n} {text:?} ({mode:?}): {got:?} vs {expected:?}"))?;
        }
        let narrow = find_matches(&text, lexicon, MatchMode::IncantationsOnly);
        let wide = find_matches(&text, lexicon, MatchMode::Combined);
        for s in &narrow {
            ensure(wide.iter().any(|w| w.start <= s.start && s.end <= w.end), || {
                format!("segment {n} {text:?}: {s:?} not covered in combined mode")
            })?;
        }
        positives += usize::from(!wide.is_empty());
    }
    Ok(format!("{segments} segments ({positives} positive), both modes"))
}

/// The three scoring rules of soft matching, one sequence each.
pub fn softmatch_examples() -> Check {
    use Tag::{B, I, O};
    let gold = |id: &str, tags: &[Tag]| TokExample {
        seg_id: id.into(),
        words: vec!["w".to_string(); tags.len()],
        tags: tags.to_vec(),
    };
    let pred = |id: &str, tags: &[Tag]| PredictionRecord {
        seg_id: id.into(),
        label: None,
        positive_probability: None,
        words: None,
        tags: Some(tags.to_vec()),
    };
    let cases = [
        ("second word only", [O, B, I, O].as_slice(), [O, O, I, O].as_slice(), ConfusionMatrix::new(1, 0, 0, 0)),
        ("punctuation tagged", &[O, O, O], &[O, O, B], ConfusionMatrix::new(0, 1, 0, 0)),
        ("all O", &[B, O], &[O, O], ConfusionMatrix::new(0, 0, 1, 0)),
    ];
    for (name, g, p, expected) in cases {
        let r = score_token_predictions_softmatch(&[pred(name, p)], &[gold(name, g)]).map_err(|e| e.to_string())?;
        ensure(r.matrix == expected, || format!("{name}: {:?}, expected {expected:?}", r.matrix))?;
    }
    Ok("TP, FP and FN cases score as specified".into())
}

/// Every tag sequence must be IOB-valid: no I after O or at the start.
pub fn first_invalid_iob<'a>(examples: impl IntoIterator<Item = &'a TokExample>) -> Option<&'a TokExample> {
    let valid = |tags: &[Tag]| {
        let mut prev = Tag::O;
        for &t in tags {
            if t == Tag::I && prev == Tag::O {
                return false;
            }
            prev = t;
        }
        true
    };
    examples.into_iter().find(|e| !valid(&e.tags))
}
