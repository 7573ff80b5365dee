//! Corpus ingestion and segmentation.
//!
//! Documents are lowercased and line-normalized on ingestion, then cut into
//! segments by one of three strategies: single sentences, blank-line
//! delimited paragraphs, or greedy packs of consecutive sentences up to a
//! token budget.
//!
//! Sentence boundaries follow a small rule table:
//!
//! | situation                                             | split? |
//! |-------------------------------------------------------|--------|
//! | run of `.`/`!`/`?`, optional closers, then whitespace | yes    |
//! | run without `.` closed by a quote (`"avada!" he ...`) | no     |
//! | `.` directly after a listed abbreviation (`mr.`)      | no     |
//! | no whitespace after the closers (`3.5`, `a.b`)        | no     |
//! | paragraph end                                         | always |

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::tokenizer::{count_tokens, Vocabulary};
use crate::{sha256_hex, Error, Exec, Result};

/// Abbreviations (without the trailing period) that never end a sentence.
pub const ABBREVIATIONS: &[&str] = &[
    "mr", "mrs", "ms", "dr", "st", "prof", "sr", "jr", "mt", "vs", "etc", "e.g", "i.e", "capt",
    "col", "gen", "lt", "sgt", "rev", "hon", "messrs", "mme", "mlle",
];

const TERMINALS: &[char] = &['.', '!', '?'];
const CLOSERS: &[char] = &['"', '\'', '\u{201d}', '\u{2019}', ')', ']', '\u{bb}'];
const QUOTES: &[char] = &['"', '\'', '\u{201d}', '\u{2019}', '\u{bb}'];

pub const DEFAULT_MAX_TOKENS: usize = 384;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DocRole {
    #[default]
    Train,
    Eval,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawDocument {
    pub doc_id: String,
    /// Normalized text.
    pub text: String,
    pub role: DocRole,
}

impl RawDocument {
    pub fn new(doc_id: impl Into<String>, raw: &str, role: DocRole) -> Result<Self> {
        let doc_id = doc_id.into();
        let text = normalize_text(raw).map_err(|e| match e {
            Error::Ingest { message, .. } => Error::Ingest {
                doc: doc_id.clone(),
                message,
            },
            e => e,
        })?;
        Ok(RawDocument { doc_id, text, role })
    }

    pub fn from_bytes(doc_id: impl Into<String>, bytes: &[u8], role: DocRole) -> Result<Self> {
        let doc_id = doc_id.into();
        let raw = std::str::from_utf8(bytes).map_err(|e| Error::Encoding {
            doc: doc_id.clone(),
            offset: e.valid_up_to(),
        })?;
        Self::new(doc_id, raw, role)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentKind {
    Sentence,
    Paragraph,
    Packed,
}

impl SegmentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SegmentKind::Sentence => "sentence",
            SegmentKind::Paragraph => "paragraph",
            SegmentKind::Packed => "packed",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub seg_id: String,
    pub doc_id: String,
    pub kind: SegmentKind,
    pub text: String,
    pub sentence_indices: Vec<usize>,
    /// Set on a packed segment whose single sentence exceeds the budget.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub oversized: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum SplitStrategy {
    SentenceSplit,
    ParagraphSplit,
    SequenceSplit { max_tokens: usize },
}

impl SplitStrategy {
    pub fn sequence(max_tokens: usize) -> Result<Self> {
        if max_tokens < 8 {
            return Err(Error::Config(format!("max_tokens must be at least 8, got {max_tokens}")));
        }
        Ok(SplitStrategy::SequenceSplit { max_tokens })
    }

    pub fn parse(name: &str, max_tokens: usize) -> Result<Self> {
        match name {
            "sentence" => Ok(SplitStrategy::SentenceSplit),
            "paragraph" => Ok(SplitStrategy::ParagraphSplit),
            "sequence" => Self::sequence(max_tokens),
            other => Err(Error::Config(format!("unknown split strategy {other:?}"))),
        }
    }
}

fn is_line_break(c: char) -> bool {
    matches!(c, '\n' | '\r' | '\u{85}' | '\u{2028}' | '\u{2029}')
}

/// Lowercases, normalizes line endings to `\n` and trims every line.
pub fn normalize_text(raw: &str) -> Result<String> {
    let mut lines = Vec::new();
    let mut cur = String::new();
    let mut chars = raw.chars().peekable();
    while let Some(c) = chars.next() {
        if is_line_break(c) {
            if c == '\r' && chars.peek() == Some(&'\n') {
                chars.next();
            }
            lines.push(std::mem::take(&mut cur));
        } else {
            cur.push(c);
        }
    }
    lines.push(cur);
    let text = lines
        .iter()
        .map(|l| l.trim().to_lowercase())
        .collect::<Vec<_>>()
        .join("\n");
    if text.trim().is_empty() {
        return Err(Error::Ingest {
            doc: "<input>".into(),
            message: "empty document".into(),
        });
    }
    Ok(text)
}

/// Blank-line delimited paragraphs, inner newlines replaced by spaces.
fn paragraphs(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur: Vec<&str> = Vec::new();
    for line in text.split('\n') {
        let line = line.trim();
        if line.is_empty() {
            if !cur.is_empty() {
                out.push(cur.join(" "));
                cur.clear();
            }
        } else {
            cur.push(line);
        }
    }
    if !cur.is_empty() {
        out.push(cur.join(" "));
    }
    out
}

fn is_abbreviation(chars: &[char], terminal_start: usize) -> bool {
    let mut s = terminal_start;
    while s > 0 && !chars[s - 1].is_whitespace() {
        s -= 1;
    }
    let token: String = chars[s..terminal_start]
        .iter()
        .filter(|c| !matches!(c, '"' | '\'' | '(' | '[' | '\u{201c}' | '\u{2018}'))
        .collect();
    ABBREVIATIONS.contains(&token.as_str())
}

/// Splits one paragraph (no newlines) into sentences.
pub fn sentences_of(paragraph: &str) -> Vec<String> {
    let chars: Vec<char> = paragraph.chars().collect();
    let n = chars.len();
    let mut out = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < n {
        if !TERMINALS.contains(&chars[i]) {
            i += 1;
            continue;
        }
        let run_start = i;
        while i < n && TERMINALS.contains(&chars[i]) {
            i += 1;
        }
        let run_has_period = chars[run_start..i].contains(&'.');
        let closer_start = i;
        while i < n && CLOSERS.contains(&chars[i]) {
            i += 1;
        }
        if i >= n || !chars[i].is_whitespace() {
            continue;
        }
        let quoted = chars[closer_start..i].iter().any(|c| QUOTES.contains(c));
        if quoted && !run_has_period {
            continue;
        }
        let single_period = closer_start - run_start == 1 && chars[run_start] == '.';
        if single_period && is_abbreviation(&chars, run_start) {
            continue;
        }
        let s: String = chars[start..i].iter().collect();
        let s = s.trim();
        if !s.is_empty() {
            out.push(s.to_string());
        }
        start = i;
    }
    let s: String = chars[start..].iter().collect();
    let s = s.trim();
    if !s.is_empty() {
        out.push(s.to_string());
    }
    out
}

/// Paragraphs of a document with their sentences.
fn structure(doc: &RawDocument) -> Vec<(String, Vec<String>)> {
    paragraphs(&doc.text)
        .into_iter()
        .map(|p| {
            let s = sentences_of(&p);
            (p, s)
        })
        .collect()
}

fn seg_id(doc_id: &str, kind: SegmentKind, ordinal: usize) -> String {
    format!("{doc_id}:{}:{ordinal}", kind.as_str())
}

pub fn split_sentences(doc: &RawDocument) -> Vec<Segment> {
    let mut out = Vec::new();
    for (_, sentences) in structure(doc) {
        for s in sentences {
            let k = out.len();
            out.push(Segment {
                seg_id: seg_id(&doc.doc_id, SegmentKind::Sentence, k),
                doc_id: doc.doc_id.clone(),
                kind: SegmentKind::Sentence,
                text: s,
                sentence_indices: vec![k],
                oversized: false,
            });
        }
    }
    out
}

pub fn split_paragraphs(doc: &RawDocument) -> Vec<Segment> {
    let mut out = Vec::new();
    let mut next_sentence = 0;
    for (k, (text, sentences)) in structure(doc).into_iter().enumerate() {
        let indices = (next_sentence..next_sentence + sentences.len()).collect();
        next_sentence += sentences.len();
        out.push(Segment {
            seg_id: seg_id(&doc.doc_id, SegmentKind::Paragraph, k),
            doc_id: doc.doc_id.clone(),
            kind: SegmentKind::Paragraph,
            text,
            sentence_indices: indices,
            oversized: false,
        });
    }
    out
}

/// Greedy left-to-right packing of consecutive sentences. Packs never cross
/// document boundaries. A sentence joins the open pack iff the pack's token
/// count plus its own stays within `max_tokens`.
pub fn pack_sequences(sentences: &[Segment], max_tokens: usize, vocab: &Vocabulary) -> Vec<Segment> {
    let counts: Vec<usize> = sentences.iter().map(|s| count_tokens(&s.text, vocab)).collect();
    pack_with_counts(sentences, &counts, max_tokens)
}

pub(crate) fn pack_with_counts(sentences: &[Segment], counts: &[usize], max_tokens: usize) -> Vec<Segment> {
    let mut out: Vec<Segment> = Vec::new();
    let mut cur: Vec<usize> = Vec::new();
    let mut cur_tokens = 0;
    let mut ordinal = 0;

    let close = |cur: &mut Vec<usize>, cur_tokens: usize, out: &mut Vec<Segment>, ordinal: &mut usize| {
        if cur.is_empty() {
            return;
        }
        let first = &sentences[cur[0]];
        let text = cur
            .iter()
            .map(|&i| sentences[i].text.as_str())
            .collect::<Vec<_>>()
            .join(" ");
        let indices = cur
            .iter()
            .flat_map(|&i| sentences[i].sentence_indices.iter().copied())
            .collect();
        out.push(Segment {
            seg_id: seg_id(&first.doc_id, SegmentKind::Packed, *ordinal),
            doc_id: first.doc_id.clone(),
            kind: SegmentKind::Packed,
            text,
            sentence_indices: indices,
            oversized: cur_tokens > max_tokens,
        });
        *ordinal += 1;
        cur.clear();
    };

    for (i, s) in sentences.iter().enumerate() {
        if let Some(&first) = cur.first() {
            if sentences[first].doc_id != s.doc_id {
                close(&mut cur, cur_tokens, &mut out, &mut ordinal);
                ordinal = 0;
                cur_tokens = 0;
            }
        }
        if !cur.is_empty() && cur_tokens + counts[i] > max_tokens {
            close(&mut cur, cur_tokens, &mut out, &mut ordinal);
            cur_tokens = 0;
        }
        cur.push(i);
        cur_tokens += counts[i];
    }
    close(&mut cur, cur_tokens, &mut out, &mut ordinal);
    out
}

/// Segments every document with `strategy`, preserving document order.
/// `vocab` is required for the sequence split.
pub fn segment_corpus(
    docs: &[RawDocument],
    strategy: SplitStrategy,
    vocab: Option<&Vocabulary>,
    exec: Exec,
) -> Result<Vec<Segment>> {
    let per_doc: Vec<Vec<Segment>> = match strategy {
        SplitStrategy::SentenceSplit => exec.map(docs, split_sentences),
        SplitStrategy::ParagraphSplit => exec.map(docs, split_paragraphs),
        SplitStrategy::SequenceSplit { max_tokens } => {
            let vocab = vocab.ok_or_else(|| {
                Error::Config("the sequence split needs a vocabulary for token counting".into())
            })?;
            exec.map(docs, |d| pack_sequences(&split_sentences(d), max_tokens, vocab))
        }
    };
    Ok(per_doc.into_iter().flatten().collect())
}

/// Content hash over `seg_id` and text of every segment, in order.
pub fn corpus_hash(segments: &[Segment]) -> String {
    let mut buf = String::new();
    for s in segments {
        buf.push_str(&s.seg_id);
        buf.push('\t');
        buf.push_str(&s.text);
        buf.push('\n');
    }
    sha256_hex(buf.as_bytes())
}

/// Reads every `*.txt` file of `dir` (sorted by name) as one document. If the
/// directory has `train/` or `eval/` subdirectories, their files are read
/// with the matching role instead.
pub fn load_corpus_dir(dir: &Path) -> Result<Vec<RawDocument>> {
    let train = dir.join("train");
    let eval = dir.join("eval");
    if train.is_dir() || eval.is_dir() {
        let mut docs = Vec::new();
        if train.is_dir() {
            docs.extend(load_flat(&train, DocRole::Train, "train/")?);
        }
        if eval.is_dir() {
            docs.extend(load_flat(&eval, DocRole::Eval, "eval/")?);
        }
        return Ok(docs);
    }
    load_flat(dir, DocRole::Train, "")
}

fn load_flat(dir: &Path, role: DocRole, prefix: &str) -> Result<Vec<RawDocument>> {
    let rd = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in rd {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        if p.is_file() && p.extension().is_some_and(|x| x == "txt") {
            paths.push(p);
        }
    }
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Input(format!("no .txt documents in {}", dir.display())));
    }
    paths
        .iter()
        .map(|p| {
            let bytes = std::fs::read(p).map_err(|e| Error::io(p, e))?;
            let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            RawDocument::from_bytes(format!("{prefix}{stem}"), &bytes, role)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(text: &str) -> RawDocument {
        RawDocument::new("d", text, DocRole::Train).unwrap()
    }

    fn texts(segs: &[Segment]) -> Vec<&str> {
        segs.iter().map(|s| s.text.as_str()).collect()
    }

    #[test]
    fn normalize_cases() {
        assert_eq!(normalize_text("Wingardium Leviosa!").unwrap(), "wingardium leviosa!");
        assert_eq!(normalize_text("Accio\r\nFirebolt").unwrap(), "accio\nfirebolt");
        assert_eq!(normalize_text("  a  \r b\u{2028}c ").unwrap(), "a\nb\nc");
        assert!(normalize_text("").is_err());
        assert!(normalize_text(" \n\n ").is_err());
    }

    #[test]
    fn invalid_utf8_reports_offset() {
        let err = RawDocument::from_bytes("x", b"abc\xffdef", DocRole::Train).unwrap_err();
        assert!(matches!(err, Error::Encoding { offset: 3, .. }));
    }

    #[test]
    fn sentence_rules() {
        assert_eq!(texts(&split_sentences(&doc("he ran. she followed!"))), ["he ran.", "she followed!"]);
        assert_eq!(split_sentences(&doc("mr. filch left.")).len(), 1);
        assert_eq!(split_sentences(&doc("\"avada kedavra!\" he cried.")).len(), 1);
        assert_eq!(split_sentences(&doc("it cost 3.5 galleons. fine")).len(), 2);
        assert_eq!(
            texts(&split_sentences(&doc("\"go home.\" she left. why?! because"))),
            ["\"go home.\"", "she left.", "why?!", "because"]
        );
        assert_eq!(split_sentences(&doc("no punctuation here")).len(), 1);
    }

    #[test]
    fn paragraph_boundaries_end_sentences() {
        let segs = split_sentences(&doc("a heading\n\nthe text. more"));
        assert_eq!(texts(&segs), ["a heading", "the text.", "more"]);
        assert_eq!(segs[2].seg_id, "d:sentence:2");
    }

    #[test]
    fn paragraph_cases() {
        assert_eq!(split_paragraphs(&doc("a.\n\nb.")).len(), 2);
        let p = split_paragraphs(&doc("a.\nb.\n\nc."));
        assert_eq!(texts(&p), ["a. b.", "c."]);
        assert_eq!(p[0].sentence_indices, vec![0, 1]);
        assert_eq!(p[1].sentence_indices, vec![2]);
        assert!(paragraphs("\n\n\n").is_empty());
    }

    fn fake_sentences(n: usize) -> Vec<Segment> {
        (0..n)
            .map(|k| Segment {
                seg_id: format!("d:sentence:{k}"),
                doc_id: "d".into(),
                kind: SegmentKind::Sentence,
                text: format!("s{k}"),
                sentence_indices: vec![k],
                oversized: false,
            })
            .collect()
    }

    #[test]
    fn packing_examples() {
        let packs = pack_with_counts(&fake_sentences(3), &[4, 5, 3], 10);
        assert_eq!(packs.iter().map(|p| p.sentence_indices.clone()).collect::<Vec<_>>(), vec![vec![0, 1], vec![2]]);
        let packs = pack_with_counts(&fake_sentences(1), &[11], 10);
        assert_eq!(packs.len(), 1);
        assert!(packs[0].oversized);
        let packs = pack_with_counts(&fake_sentences(4), &[3, 3, 3, 3], 6);
        assert_eq!(packs.iter().map(|p| p.sentence_indices.clone()).collect::<Vec<_>>(), vec![vec![0, 1], vec![2, 3]]);
        assert_eq!(packs[1].seg_id, "d:packed:1");
        assert_eq!(packs[0].text, "s0 s1");
    }

    #[test]
    fn packing_restarts_per_document() {
        let mut s = fake_sentences(2);
        s[1].doc_id = "e".into();
        let packs = pack_with_counts(&s, &[1, 1], 10);
        assert_eq!(packs.len(), 2);
        assert_eq!(packs[1].seg_id, "e:packed:0");
    }

    #[test]
    fn strategy_validation() {
        assert!(SplitStrategy::sequence(7).is_err());
        assert_eq!(SplitStrategy::parse("sequence", 384).unwrap(), SplitStrategy::SequenceSplit { max_tokens: 384 });
        let json = serde_json::to_string(&SplitStrategy::SequenceSplit { max_tokens: 384 }).unwrap();
        assert_eq!(json, r#"{"variant":"sequence_split","max_tokens":384}"#);
    }
}
