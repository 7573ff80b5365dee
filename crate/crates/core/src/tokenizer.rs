//! WordPiece tokenization over a fixed, line-ordered vocabulary.
//!
//! Text is first split into words (whitespace separated, with every
//! non-alphanumeric character detached as its own word). Each word is then
//! decomposed greedily into the longest matching vocabulary pieces; pieces
//! after the first carry the `##` continuation prefix. A word that cannot be
//! covered maps to the single unknown piece.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use crate::spellbook::SpellLexicon;
use crate::{artifact, sha256_hex, Error, Result};

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const CONTINUATION: &str = "##";

/// Words longer than this (in characters) are mapped to the unknown piece.
pub const MAX_WORD_CHARS: usize = 100;

/// Reference vocabulary size of the full-scale tokenizer.
pub const REFERENCE_VOCAB_SIZE: usize = 30_522;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SpecialIds {
    pub pad: u32,
    pub unk: u32,
    pub cls: u32,
    pub sep: u32,
}

#[derive(Clone, Debug)]
pub struct Vocabulary {
    pieces: Vec<String>,
    index: HashMap<String, u32>,
    special: SpecialIds,
    max_piece_chars: usize,
}

impl Vocabulary {
    pub fn from_pieces(pieces: Vec<String>) -> Result<Self> {
        if pieces.is_empty() {
            return Err(Error::Vocab("vocabulary is empty".into()));
        }
        let mut index = HashMap::with_capacity(pieces.len());
        let mut max_piece_chars = 0;
        for (id, p) in pieces.iter().enumerate() {
            if p.is_empty() || p.chars().any(char::is_whitespace) {
                return Err(Error::Vocab(format!("invalid piece {p:?} at line {}", id + 1)));
            }
            if index.insert(p.clone(), id as u32).is_some() {
                return Err(Error::Vocab(format!("duplicate piece {p:?} at line {}", id + 1)));
            }
            max_piece_chars = max_piece_chars.max(p.chars().count());
        }
        let find = |name: &str| {
            index
                .get(name)
                .copied()
                .ok_or_else(|| Error::Vocab(format!("missing special piece {name}")))
        };
        let special = SpecialIds {
            pad: find(PAD)?,
            unk: find(UNK)?,
            cls: find(CLS)?,
            sep: find(SEP)?,
        };
        Ok(Vocabulary {
            pieces,
            index,
            special,
            max_piece_chars,
        })
    }

    /// Loads a vocabulary file: one piece per line, id = zero-based line number.
    pub fn load(path: &Path) -> Result<Self> {
        let body = artifact::read_to_string(path)?;
        Self::parse(&body)
    }

    pub fn parse(body: &str) -> Result<Self> {
        let body = body.strip_suffix('\n').unwrap_or(body);
        if body.is_empty() {
            return Err(Error::Vocab("vocabulary file is empty".into()));
        }
        let pieces = body
            .split('\n')
            .map(|l| l.strip_suffix('\r').unwrap_or(l).to_string())
            .collect();
        Self::from_pieces(pieces)
    }

    /// The file form: every piece followed by a newline.
    pub fn to_file_string(&self) -> String {
        let mut s = String::with_capacity(self.pieces.len() * 8);
        for p in &self.pieces {
            s.push_str(p);
            s.push('\n');
        }
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        artifact::write_file(path, self.to_file_string().as_bytes())
    }

    /// SHA-256 of the file form; checkpoints are bound to this value.
    pub fn hash(&self) -> String {
        sha256_hex(self.to_file_string().as_bytes())
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn id(&self, piece: &str) -> Option<u32> {
        self.index.get(piece).copied()
    }

    pub fn contains(&self, piece: &str) -> bool {
        self.index.contains_key(piece)
    }

    pub fn piece(&self, id: u32) -> &str {
        &self.pieces[id as usize]
    }

    pub fn pieces(&self) -> &[String] {
        &self.pieces
    }

    pub fn special(&self) -> SpecialIds {
        self.special
    }

    pub fn is_special(&self, id: u32) -> bool {
        let s = self.special;
        id == s.pad || id == s.unk || id == s.cls || id == s.sep
    }

    pub(crate) fn max_piece_chars(&self) -> usize {
        self.max_piece_chars
    }

    fn push(&mut self, piece: String) {
        self.max_piece_chars = self.max_piece_chars.max(piece.chars().count());
        self.index.insert(piece.clone(), self.pieces.len() as u32);
        self.pieces.push(piece);
    }
}

/// A word of the pre-split, with character offsets into the source text.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Word {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

/// Splits on whitespace and detaches every non-alphanumeric character as a
/// word of its own.
pub fn split_words(text: &str) -> Vec<Word> {
    let mut words = Vec::new();
    let mut cur = String::new();
    let mut cur_start = 0;
    let flush = |cur: &mut String, start: usize, end: usize, words: &mut Vec<Word>| {
        if !cur.is_empty() {
            words.push(Word {
                text: std::mem::take(cur),
                start,
                end,
            });
        }
    };
    let mut pos = 0;
    for c in text.chars() {
        if c.is_whitespace() {
            flush(&mut cur, cur_start, pos, &mut words);
        } else if c.is_alphanumeric() {
            if cur.is_empty() {
                cur_start = pos;
            }
            cur.push(c);
        } else {
            flush(&mut cur, cur_start, pos, &mut words);
            words.push(Word {
                text: c.to_string(),
                start: pos,
                end: pos + 1,
            });
        }
        pos += 1;
    }
    flush(&mut cur, cur_start, pos, &mut words);
    words
}

/// Greedy longest-match-first decomposition of one word.
pub fn tokenize_word(word: &str, vocab: &Vocabulary) -> Vec<String> {
    tokenize_word_ids(word, vocab)
        .into_iter()
        .map(|id| vocab.piece(id).to_string())
        .collect()
}

pub fn tokenize_word_ids(word: &str, vocab: &Vocabulary) -> Vec<u32> {
    let chars: Vec<char> = word.chars().collect();
    if chars.is_empty() {
        return Vec::new();
    }
    if chars.len() > MAX_WORD_CHARS {
        return vec![vocab.special().unk];
    }
    let mut out = Vec::new();
    let mut start = 0;
    let mut candidate = String::new();
    while start < chars.len() {
        let longest = (chars.len() - start).min(vocab.max_piece_chars());
        let mut found = None;
        for len in (1..=longest).rev() {
            candidate.clear();
            if start > 0 {
                candidate.push_str(CONTINUATION);
            }
            candidate.extend(&chars[start..start + len]);
            if let Some(id) = vocab.id(&candidate) {
                found = Some((id, len));
                break;
            }
        }
        match found {
            Some((id, len)) => {
                out.push(id);
                start += len;
            }
            None => return vec![vocab.special().unk],
        }
    }
    out
}

/// Number of pieces `text` tokenizes to, excluding special and padding pieces.
pub fn count_tokens(text: &str, vocab: &Vocabulary) -> usize {
    split_words(text)
        .iter()
        .map(|w| tokenize_word_ids(&w.text, vocab).len())
        .sum()
}

/// A padded, fixed-length encoding of one segment.
#[derive(Clone, Debug, PartialEq)]
pub struct Encoding {
    pub ids: Vec<u32>,
    pub pieces: Vec<String>,
    /// Source word index per position; `None` for special and padding pieces.
    pub word_ids: Vec<Option<u32>>,
    pub attention_mask: Vec<u8>,
}

impl Encoding {
    /// Number of real (unpadded) positions, CLS and SEP included.
    pub fn real_len(&self) -> usize {
        self.attention_mask.iter().filter(|&&m| m == 1).count()
    }

    pub fn max_len(&self) -> usize {
        self.ids.len()
    }

    /// Real ids only (CLS .. SEP).
    pub fn real_ids(&self) -> &[u32] {
        &self.ids[..self.real_len()]
    }
}

pub fn encode_segment(text: &str, vocab: &Vocabulary, max_len: usize) -> Encoding {
    let words: Vec<String> = split_words(text).into_iter().map(|w| w.text).collect();
    encode_words(&words, vocab, max_len)
}

/// Encodes an already split word sequence. Truncation keeps the head of the
/// sequence; CLS and SEP are always present.
pub fn encode_words(words: &[String], vocab: &Vocabulary, max_len: usize) -> Encoding {
    assert!(max_len >= 3, "max_len must be at least 3");
    let sp = vocab.special();
    let budget = max_len - 2;
    let mut ids = vec![sp.cls];
    let mut word_ids = vec![None];
    'outer: for (wi, w) in words.iter().enumerate() {
        for id in tokenize_word_ids(w, vocab) {
            if ids.len() - 1 == budget {
                break 'outer;
            }
            ids.push(id);
            word_ids.push(Some(wi as u32));
        }
    }
    ids.push(sp.sep);
    word_ids.push(None);
    let real = ids.len();
    ids.resize(max_len, sp.pad);
    word_ids.resize(max_len, None);
    let mut attention_mask = vec![1u8; real];
    attention_mask.resize(max_len, 0);
    let pieces = ids.iter().map(|&id| vocab.piece(id).to_string()).collect();
    Encoding {
        ids,
        pieces,
        word_ids,
        attention_mask,
    }
}

/// Distinct words (per [`split_words`]) of every match phrase in the lexicon,
/// in lexicon order.
pub fn lexicon_words(lexicon: &SpellLexicon) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for entry in lexicon.entries() {
        for phrase in entry.phrases() {
            for w in split_words(phrase) {
                if seen.insert(w.text.clone()) {
                    out.push(w.text);
                }
            }
        }
    }
    out
}

/// Appends every lexicon word that is not already a whole piece. Existing ids
/// are unchanged. Returns the extended vocabulary and the number appended.
pub fn extend_vocab(vocab: &Vocabulary, lexicon: &SpellLexicon) -> (Vocabulary, usize) {
    let mut out = vocab.clone();
    let mut added = 0;
    for w in lexicon_words(lexicon) {
        if !out.contains(&w) {
            out.push(w);
            added += 1;
        }
    }
    (out, added)
}

/// Merges `[p, ##a, ##b, ...]` runs back into words.
pub fn detokenize<S: AsRef<str>>(pieces: &[S]) -> Result<Vec<String>> {
    let mut words: Vec<String> = Vec::new();
    for (i, p) in pieces.iter().enumerate() {
        let p = p.as_ref();
        match p.strip_prefix(CONTINUATION) {
            Some(rest) => match words.last_mut() {
                Some(w) => w.push_str(rest),
                None => {
                    return Err(Error::Pieces(format!(
                        "continuation piece {p:?} at position {i} has no word to attach to"
                    )))
                }
            },
            None => words.push(p.to_string()),
        }
    }
    Ok(words)
}

/// Builds a vocabulary from `texts` by frequency: special pieces, every
/// character (initial and `##` form), whole words by count, then multi-char
/// word prefixes and `##` inner substrings by count, until `target_size`.
/// Ties break lexicographically, so the result is deterministic.
pub fn build_vocab<S: AsRef<str>>(texts: &[S], target_size: usize) -> Vocabulary {
    let mut word_counts: BTreeMap<String, u64> = BTreeMap::new();
    for t in texts {
        for w in split_words(t.as_ref()) {
            *word_counts.entry(w.text).or_default() += 1;
        }
    }
    let mut pieces: Vec<String> = [PAD, UNK, CLS, SEP].iter().map(|s| s.to_string()).collect();
    let mut seen: HashSet<String> = pieces.iter().cloned().collect();

    let mut chars: Vec<char> = word_counts.keys().flat_map(|w| w.chars()).collect();
    chars.sort_unstable();
    chars.dedup();
    for c in &chars {
        for p in [c.to_string(), format!("{CONTINUATION}{c}")] {
            if seen.insert(p.clone()) {
                pieces.push(p);
            }
        }
    }

    let by_count = |m: HashMap<String, u64>| {
        let mut v: Vec<(String, u64)> = m.into_iter().collect();
        v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        v
    };

    let whole: HashMap<String, u64> = word_counts
        .iter()
        .filter(|(w, _)| w.chars().count() > 1)
        .map(|(w, c)| (w.clone(), *c))
        .collect();

    let mut sub: HashMap<String, u64> = HashMap::new();
    for (w, &c) in &word_counts {
        let cs: Vec<char> = w.chars().collect();
        for end in 2..cs.len() {
            *sub.entry(cs[..end].iter().collect()).or_default() += c;
        }
        for start in 1..cs.len() {
            for end in start + 2..=cs.len() {
                let mut p = String::from(CONTINUATION);
                p.extend(&cs[start..end]);
                *sub.entry(p).or_default() += c;
            }
        }
    }

    for (p, _) in by_count(whole).into_iter().chain(by_count(sub)) {
        if pieces.len() >= target_size {
            break;
        }
        if seen.insert(p.clone()) {
            pieces.push(p);
        }
    }
    Vocabulary::from_pieces(pieces).expect("builder emits a valid vocabulary")
}
