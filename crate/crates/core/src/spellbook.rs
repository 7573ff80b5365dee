//! Spell lexicon and segment labeling.
//!
//! A lexicon file holds one JSON record per line. Entry records carry a
//! `category`, an optional `incantation` and a list of `names`; exclusion
//! records carry only an `excluded` list of generic phrases that must never
//! count as spells:
//!
//! ```text
//! {"category":"incantation_with_name","incantation":"accio","names":["summoning charm"]}
//! {"category":"name_only","names":["bat-bogey hex"]}
//! {"excluded":["defensive spells"]}
//! ```
//!
//! Matching is exact string comparison on lowercase text, restricted to word
//! boundaries (a boundary is a non-alphanumeric character or the string
//! edge), leftmost-longest and non-overlapping.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{artifact, sha256_hex, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    IncantationWithName,
    IncantationOnly,
    NameOnly,
    ActionAsSpell,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpellEntry {
    pub category: Category,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub incantation: Option<String>,
    #[serde(default)]
    pub names: Vec<String>,
}

impl SpellEntry {
    /// All match phrases of the entry, incantation first.
    pub fn phrases(&self) -> impl Iterator<Item = &str> {
        self.incantation
            .as_deref()
            .into_iter()
            .chain(self.names.iter().map(String::as_str))
    }

    fn validate(&self) -> Result<()> {
        let has_inc = self.incantation.as_deref().is_some_and(|s| !s.is_empty());
        let has_names = !self.names.is_empty();
        let bad = |why: &str| Err(Error::Lexicon(format!("{why}: {self:?}")));
        if !has_inc && !has_names {
            return bad("entry has neither incantation nor names");
        }
        if self.names.iter().any(String::is_empty) {
            return bad("empty spell name");
        }
        match self.category {
            Category::NameOnly | Category::ActionAsSpell if self.incantation.is_some() => {
                bad("name-only entry carries an incantation")
            }
            Category::NameOnly | Category::ActionAsSpell if !has_names => bad("entry has no names"),
            Category::IncantationOnly | Category::IncantationWithName if !has_inc => {
                bad("incantation entry lacks an incantation")
            }
            Category::IncantationWithName if !has_names => bad("entry lacks spell names"),
            Category::IncantationOnly if has_names => bad("incantation-only entry lists names"),
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    IncantationsOnly,
    #[default]
    Combined,
}

impl MatchMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "incantations" | "incantations_only" => Some(MatchMode::IncantationsOnly),
            "combined" => Some(MatchMode::Combined),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchSpan {
    pub phrase: String,
    /// Character offsets into the segment text, end exclusive.
    pub start: usize,
    pub end: usize,
    /// Index into [`SpellLexicon::entries`].
    pub entry_ref: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SegmentLabel {
    pub positive: bool,
    pub spans: Vec<MatchSpan>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PhraseKind {
    Incantation,
    Name,
    Excluded,
}

impl PhraseKind {
    pub fn active(self, mode: MatchMode) -> bool {
        match self {
            PhraseKind::Incantation | PhraseKind::Excluded => true,
            PhraseKind::Name => mode == MatchMode::Combined,
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Terminal {
    kind: PhraseKind,
    entry: usize,
}

#[derive(Clone, Debug, Default)]
struct TrieNode {
    next: HashMap<char, usize>,
    terminal: Option<Terminal>,
}

#[derive(Clone, Debug)]
pub struct SpellLexicon {
    entries: Vec<SpellEntry>,
    excluded: Vec<String>,
    trie: Vec<TrieNode>,
}

#[derive(Serialize, Deserialize)]
struct LexiconRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    category: Option<Category>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    incantation: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    names: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    excluded: Vec<String>,
}

impl SpellLexicon {
    /// Builds a lexicon, lowercasing every phrase. Fails on duplicate phrases
    /// and on excluded phrases that are also match phrases.
    pub fn new(entries: Vec<SpellEntry>, excluded: Vec<String>) -> Result<Self> {
        let entries: Vec<SpellEntry> = entries
            .into_iter()
            .map(|e| SpellEntry {
                category: e.category,
                incantation: e.incantation.map(|s| s.trim().to_lowercase()),
                names: e.names.iter().map(|s| s.trim().to_lowercase()).collect(),
            })
            .collect();
        let excluded: Vec<String> = excluded.iter().map(|s| s.trim().to_lowercase()).collect();

        let mut seen = HashSet::new();
        for e in &entries {
            e.validate()?;
            for p in e.phrases() {
                if !seen.insert(p.to_string()) {
                    return Err(Error::Lexicon(format!("duplicate phrase {p:?}")));
                }
            }
        }
        let mut seen_excluded = HashSet::new();
        for x in &excluded {
            if x.is_empty() {
                return Err(Error::Lexicon("empty excluded phrase".into()));
            }
            if seen.contains(x) {
                return Err(Error::Lexicon(format!(
                    "excluded phrase {x:?} is also a match phrase"
                )));
            }
            if !seen_excluded.insert(x.clone()) {
                return Err(Error::Lexicon(format!("duplicate excluded phrase {x:?}")));
            }
        }

        let mut lex = SpellLexicon {
            entries,
            excluded,
            trie: vec![TrieNode::default()],
        };
        let mut inserts = Vec::new();
        for (i, e) in lex.entries.iter().enumerate() {
            if let Some(inc) = &e.incantation {
                inserts.push((inc.clone(), Terminal { kind: PhraseKind::Incantation, entry: i }));
            }
            for n in &e.names {
                inserts.push((n.clone(), Terminal { kind: PhraseKind::Name, entry: i }));
            }
        }
        for (i, x) in lex.excluded.iter().enumerate() {
            inserts.push((x.clone(), Terminal { kind: PhraseKind::Excluded, entry: i }));
        }
        for (phrase, t) in inserts {
            lex.insert(&phrase, t);
        }
        Ok(lex)
    }

    fn insert(&mut self, phrase: &str, terminal: Terminal) {
        let mut node = 0;
        for c in phrase.chars() {
            node = match self.trie[node].next.get(&c) {
                Some(&n) => n,
                None => {
                    self.trie.push(TrieNode::default());
                    let n = self.trie.len() - 1;
                    self.trie[node].next.insert(c, n);
                    n
                }
            };
        }
        self.trie[node].terminal = Some(terminal);
    }

    pub fn parse(path: &Path, body: &str) -> Result<Self> {
        let (_, records): (_, Vec<LexiconRecord>) = artifact::parse_jsonl(path, body)?;
        let mut entries = Vec::new();
        let mut excluded = Vec::new();
        for (i, r) in records.into_iter().enumerate() {
            match r.category {
                Some(category) => {
                    if !r.excluded.is_empty() {
                        return Err(Error::Lexicon(format!(
                            "record {} mixes an entry with excluded phrases",
                            i + 1
                        )));
                    }
                    entries.push(SpellEntry {
                        category,
                        incantation: r.incantation,
                        names: r.names,
                    });
                }
                None => {
                    if r.excluded.is_empty() || r.incantation.is_some() || !r.names.is_empty() {
                        return Err(Error::Lexicon(format!(
                            "record {} has no category and is not an exclusion record",
                            i + 1
                        )));
                    }
                    excluded.extend(r.excluded);
                }
            }
        }
        Self::new(entries, excluded)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let body = artifact::read_to_string(path)?;
        Self::parse(path, &body)
    }

    /// Canonical file form (entries, then one exclusion record).
    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            let r = LexiconRecord {
                category: Some(e.category),
                incantation: e.incantation.clone(),
                names: e.names.clone(),
                excluded: Vec::new(),
            };
            out.push_str(&serde_json::to_string(&r).expect("record serializes"));
            out.push('\n');
        }
        if !self.excluded.is_empty() {
            let r = LexiconRecord {
                category: None,
                incantation: None,
                names: Vec::new(),
                excluded: self.excluded.clone(),
            };
            out.push_str(&serde_json::to_string(&r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn hash(&self) -> String {
        sha256_hex(self.to_file_string().as_bytes())
    }

    pub fn entries(&self) -> &[SpellEntry] {
        &self.entries
    }

    pub fn excluded_phrases(&self) -> &[String] {
        &self.excluded
    }

    /// Every phrase with its kind and entry (or excluded-list) index.
    pub fn all_phrases(&self) -> Vec<(String, PhraseKind, usize)> {
        let mut out = Vec::new();
        for (i, e) in self.entries.iter().enumerate() {
            if let Some(inc) = &e.incantation {
                out.push((inc.clone(), PhraseKind::Incantation, i));
            }
            for n in &e.names {
                out.push((n.clone(), PhraseKind::Name, i));
            }
        }
        for (i, x) in self.excluded.iter().enumerate() {
            out.push((x.clone(), PhraseKind::Excluded, i));
        }
        out
    }

    /// Finds the entry that contains `phrase` as incantation or name.
    pub fn entry_for(&self, phrase: &str) -> Option<&SpellEntry> {
        self.entries.iter().find(|e| e.phrases().any(|p| p == phrase))
    }
}

pub(crate) fn is_boundary(chars: &[char], pos: usize) -> bool {
    pos == 0 || pos >= chars.len() || !chars[pos].is_alphanumeric()
}

/// All non-overlapping lexicon matches in `text`, leftmost-longest.
pub fn find_matches(text: &str, lexicon: &SpellLexicon, mode: MatchMode) -> Vec<MatchSpan> {
    let chars: Vec<char> = text.chars().collect();
    let n = chars.len();
    let mut spans = Vec::new();
    let mut i = 0;
    while i < n {
        let starts_word = i == 0 || !chars[i - 1].is_alphanumeric();
        if !starts_word {
            i += 1;
            continue;
        }
        let mut node = 0;
        let mut best: Option<(usize, Terminal)> = None;
        let mut j = i;
        while j < n {
            match lexicon.trie[node].next.get(&chars[j]) {
                Some(&next) => node = next,
                None => break,
            }
            j += 1;
            if let Some(t) = lexicon.trie[node].terminal {
                if t.kind.active(mode) && is_boundary(&chars, j) {
                    best = Some((j, t));
                }
            }
        }
        match best {
            Some((end, t)) => {
                if t.kind != PhraseKind::Excluded {
                    spans.push(MatchSpan {
                        phrase: chars[i..end].iter().collect(),
                        start: i,
                        end,
                        entry_ref: t.entry,
                    });
                }
                i = end;
            }
            None => i += 1,
        }
    }
    spans
}

pub fn label_segment(text: &str, lexicon: &SpellLexicon, mode: MatchMode) -> SegmentLabel {
    let spans = find_matches(text, lexicon, mode);
    SegmentLabel {
        positive: !spans.is_empty(),
        spans,
    }
}
