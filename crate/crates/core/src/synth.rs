//! Seeded synthetic novel text.
//!
//! Generates plain prose from sentence templates over a fixed background
//! vocabulary, mixing in spell-casting sentences built from a lexicon. Used
//! for the bundled corpus, the desk vocabulary, benchmarks and tests; real
//! corpora are supplied by the user.

use crate::corpus::{DocRole, RawDocument};
use crate::dataset::{SeqExample, SeqLabel};
use crate::rng::SplitMix64;
use crate::spellbook::{Category, SpellLexicon};

pub const CHARACTER_NAMES: &[&str] = &[
    "alden", "brisa", "corwin", "delphine", "eamon", "fenna", "garrick", "hollis", "isolde",
    "jasper", "kestrel", "lorcan", "maribel", "nessa", "oswin", "perrin", "quenby", "rowena",
    "soren", "tamsin", "ulric", "vesper", "wren", "yarrow",
];

const NOUNS: &[&str] = &[
    "door", "window", "table", "chair", "book", "letter", "candle", "lamp", "cup", "plate",
    "kettle", "cloak", "boot", "hat", "scarf", "bag", "trunk", "box", "key", "lock", "map",
    "quill", "parchment", "ink", "bottle", "jar", "basket", "broom", "mirror", "clock", "bell",
    "stone", "rock", "tree", "branch", "leaf", "flower", "garden", "field", "hill", "river",
    "lake", "bridge", "road", "path", "gate", "fence", "wall", "roof", "tower", "stair", "hall",
    "room", "kitchen", "cellar", "attic", "library", "classroom", "corridor", "staircase",
    "fireplace", "fire", "smoke", "rain", "snow", "wind", "cloud", "storm", "sun", "moon",
    "star", "sky", "night", "morning", "evening", "afternoon", "owl", "cat", "dog", "horse",
    "raven", "toad", "rat", "spider", "beetle", "feather", "egg", "bread", "cheese", "apple",
    "pumpkin", "soup", "tea", "milk", "sugar", "honey", "coin", "ring", "necklace", "blanket",
    "pillow", "curtain", "carpet", "painting", "portrait", "statue", "chest", "shelf",
    "drawer", "desk", "bench", "cart", "wagon", "boat", "train", "platform", "ticket",
    "newspaper", "message", "secret", "question", "answer", "lesson", "exam", "potion",
    "cauldron", "teacher", "student", "friend", "brother", "sister", "mother", "father",
    "uncle", "aunt", "neighbour", "stranger", "guard", "crowd", "village", "castle", "forest",
    "mountain", "valley", "window sill", "shadow", "voice", "noise", "silence", "laughter",
];

const ADJECTIVES: &[&str] = &[
    "old", "new", "small", "large", "tall", "short", "long", "narrow", "wide", "heavy", "light",
    "dark", "bright", "quiet", "loud", "cold", "warm", "wet", "dry", "dusty", "clean", "dirty",
    "broken", "empty", "full", "strange", "ordinary", "curious", "careful", "nervous", "angry",
    "happy", "tired", "hungry", "sleepy", "cheerful", "gloomy", "ancient", "wooden", "silver",
    "golden", "crooked", "smooth", "rough", "soft", "hard", "sharp", "gentle", "friendly",
    "grumpy", "famous", "secret", "hidden", "open", "closed", "distant", "nearby", "green",
    "blue", "red", "yellow", "grey", "brown", "purple", "pale", "enormous", "tiny", "shabby",
    "elegant", "peculiar", "splendid", "miserable", "restless", "patient",
];

const VERBS_T: &[&str] = &[
    "opened", "closed", "carried", "dropped", "lifted", "pushed", "pulled", "grabbed", "held",
    "found", "lost", "hid", "watched", "noticed", "ignored", "followed", "chased", "cleaned",
    "painted", "repaired", "broke", "moved", "packed", "unpacked", "borrowed", "returned",
    "bought", "sold", "washed", "folded", "read", "wrote", "signed", "counted", "checked",
    "studied", "measured", "weighed", "polished", "fetched", "collected", "arranged", "sorted",
    "locked", "unlocked", "examined", "inspected", "admired", "tasted", "cooked", "baked",
    "stirred", "poured", "filled", "emptied", "dragged", "kicked", "touched", "wrapped",
    "hung", "placed", "tossed", "caught", "visited", "remembered", "forgot", "described",
];

const VERBS_I: &[&str] = &[
    "waited", "slept", "laughed", "sighed", "smiled", "frowned", "yawned", "shivered",
    "nodded", "listened", "wandered", "hurried", "stumbled", "paused", "hesitated", "rested",
    "trembled", "glowed", "rattled", "creaked", "flickered", "vanished", "shrank", "swayed",
    "wobbled", "rolled", "spun", "floated", "sank", "melted", "cracked", "shattered", "froze",
    "burned", "sparkled", "hummed", "whistled", "grumbled", "muttered", "wept",
];

const ADVERBS: &[&str] = &[
    "quietly", "slowly", "quickly", "carefully", "suddenly", "gently", "loudly", "softly",
    "nervously", "happily", "sadly", "angrily", "eagerly", "calmly", "briefly", "finally",
    "clearly", "barely", "nearly", "simply", "politely", "rudely", "sleepily", "cheerfully",
    "patiently", "absently", "boldly", "warily",
];

const PLACES: &[&str] = &[
    "kitchen", "garden", "library", "cellar", "attic", "station", "market", "village",
    "common room", "great hall", "staircase", "courtyard", "greenhouse", "stable", "shop",
    "inn", "bakery", "office", "dormitory", "corridor", "lakeside", "orchard", "meadow",
];

const PREPOSITIONS: &[&str] = &[
    "near", "under", "behind", "beside", "across", "towards", "inside", "outside", "beyond",
    "along", "past", "around",
];

const INTERJECTIONS: &[&str] = &[
    "hello", "goodbye", "wait", "careful", "hurry", "look", "listen", "thanks", "sorry",
    "enough", "quiet", "come on", "good morning", "goodnight",
];

const TIMES: &[&str] = &["morning", "afternoon", "evening", "night", "day", "week", "winter", "summer"];
const MEALS: &[&str] = &["breakfast", "lunch", "dinner", "supper", "tea"];

const TEMPLATE_WORDS: &[&str] = &[
    "the", "a", "and", "was", "it", "to", "his", "her", "their", "said", "had", "never", "at",
    "of", "with", "before", "from", "in", "into", "he", "she", "they", "raised", "wand",
    "shouted", "cried", "pointing", "flick", "whispered", "pointed", "cast", "hit", "mastered",
    "walked", "put", "pocket", "everyone", "heard", "someone", "across", "over", "again",
    "then", "while", "after", "very", "too", "an", "on", "all", "that", "for", "went", "up",
    "down", "out", "back", "one", "no", "yes", "is", "not", "could", "would", "see", "saw",
    "looked", "asked", "knew", "thought", "be",
];

const POSSESSIVES: &[&str] = &["his", "her", "their"];
const PRONOUNS: &[&str] = &["he", "she", "they"];

#[derive(Clone, Debug)]
pub struct SynthConfig {
    pub documents: usize,
    pub paragraphs_per_doc: (usize, usize),
    pub sentences_per_paragraph: (usize, usize),
    /// Probability that a sentence is a spell sentence.
    pub spell_rate: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            documents: 3,
            paragraphs_per_doc: (20, 40),
            sentences_per_paragraph: (1, 6),
            spell_rate: 0.06,
            seed: 7,
        }
    }
}

/// One spell phrase usable by the generator.
#[derive(Clone, Debug)]
pub struct SpellPhrase {
    pub phrase: String,
    pub kind: SpellKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpellKind {
    Incantation,
    Name,
    Action,
}

pub fn spell_phrases(lexicon: &SpellLexicon) -> Vec<SpellPhrase> {
    let mut out = Vec::new();
    for e in lexicon.entries() {
        if let Some(i) = &e.incantation {
            out.push(SpellPhrase {
                phrase: i.clone(),
                kind: SpellKind::Incantation,
            });
        }
        let kind = if e.category == Category::ActionAsSpell {
            SpellKind::Action
        } else {
            SpellKind::Name
        };
        for n in &e.names {
            out.push(SpellPhrase {
                phrase: n.clone(),
                kind,
            });
        }
    }
    out
}

/// Every word the background templates can emit, excluding character names.
pub fn common_words() -> Vec<String> {
    let mut words: Vec<String> = [
        NOUNS, ADJECTIVES, VERBS_T, VERBS_I, ADVERBS, PLACES, PREPOSITIONS, INTERJECTIONS, TIMES,
        MEALS, TEMPLATE_WORDS,
    ]
    .iter()
    .flat_map(|l| l.iter())
    .flat_map(|w| w.split(' '))
    .map(str::to_string)
    .collect();
    words.sort();
    words.dedup();
    words
}

pub struct Generator {
    rng: SplitMix64,
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

impl Generator {
    pub fn new(seed: u64) -> Self {
        Generator {
            rng: SplitMix64::new(seed),
        }
    }

    fn pick<'a>(&mut self, xs: &'a [&'a str]) -> &'a str {
        xs[self.rng.below(xs.len() as u64) as usize]
    }

    fn chance(&mut self, p: f64) -> bool {
        ((self.rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64) < p
    }

    fn range(&mut self, (lo, hi): (usize, usize)) -> usize {
        lo + self.rng.below((hi - lo + 1) as u64) as usize
    }

    fn name(&mut self) -> String {
        capitalize(self.pick(CHARACTER_NAMES))
    }

    /// A sentence with no spell in it.
    pub fn background_sentence(&mut self) -> String {
        let t = self.rng.below(9);
        match t {
            0 => format!(
                "{} {} the {} {} {} the {}.",
                self.name(),
                self.pick(VERBS_T),
                self.pick(ADJECTIVES),
                self.pick(NOUNS),
                self.pick(PREPOSITIONS),
                self.pick(NOUNS)
            ),
            1 => format!(
                "The {} was {} and {}.",
                self.pick(NOUNS),
                self.pick(ADJECTIVES),
                self.pick(ADJECTIVES)
            ),
            2 => format!(
                "\"{}!\" {} said {}.",
                capitalize(self.pick(INTERJECTIONS)),
                self.name(),
                self.pick(ADVERBS)
            ),
            3 => format!(
                "{} walked to the {} and {} the {}.",
                self.name(),
                self.pick(PLACES),
                self.pick(VERBS_T),
                self.pick(NOUNS)
            ),
            4 => format!(
                "It was a {} {}, and the {} {} {}.",
                self.pick(ADJECTIVES),
                self.pick(TIMES),
                self.pick(NOUNS),
                self.pick(VERBS_I),
                self.pick(ADVERBS)
            ),
            5 => format!(
                "{} and {} {} the {} before {}.",
                self.name(),
                self.name(),
                self.pick(VERBS_T),
                self.pick(NOUNS),
                self.pick(MEALS)
            ),
            6 => format!(
                "{} {} a {} {} from the {}.",
                capitalize(self.pick(PRONOUNS)),
                self.pick(VERBS_T),
                self.pick(ADJECTIVES),
                self.pick(NOUNS),
                self.pick(PLACES)
            ),
            7 => format!(
                "{} put {} wand back in {} pocket and {}.",
                self.name(),
                self.pick(POSSESSIVES),
                self.pick(POSSESSIVES),
                self.pick(VERBS_I)
            ),
            _ => format!(
                "The {} {} {} the {} while {} {}.",
                self.pick(NOUNS),
                self.pick(VERBS_I),
                self.pick(PREPOSITIONS),
                self.pick(NOUNS),
                self.name(),
                self.pick(VERBS_I)
            ),
        }
    }

    /// A sentence that casts `spell`.
    pub fn spell_sentence(&mut self, spell: &SpellPhrase) -> String {
        let p = &spell.phrase;
        match spell.kind {
            SpellKind::Incantation => match self.rng.below(4) {
                0 => format!(
                    "{} raised {} wand and shouted, \"{}!\"",
                    self.name(),
                    self.pick(POSSESSIVES),
                    capitalize(p)
                ),
                1 => format!(
                    "\"{}!\" {} cried, pointing {} wand at the {}.",
                    capitalize(p),
                    self.name(),
                    self.pick(POSSESSIVES),
                    self.pick(NOUNS)
                ),
                2 => format!(
                    "With a flick of {} wand, {} whispered \"{}\" and the {} {}.",
                    self.pick(POSSESSIVES),
                    self.name(),
                    p,
                    self.pick(NOUNS),
                    self.pick(VERBS_I)
                ),
                _ => format!(
                    "{} pointed {} wand at the {} {} and said \"{}\" {}.",
                    self.name(),
                    self.pick(POSSESSIVES),
                    self.pick(ADJECTIVES),
                    self.pick(NOUNS),
                    p,
                    self.pick(ADVERBS)
                ),
            },
            SpellKind::Name => match self.rng.below(3) {
                0 => format!("{} cast a {} at the {}.", self.name(), p, self.pick(NOUNS)),
                1 => format!(
                    "The {} hit the {} and it {}.",
                    p,
                    self.pick(NOUNS),
                    self.pick(VERBS_I)
                ),
                _ => format!("{} had never mastered the {}.", self.name(), p),
            },
            SpellKind::Action => format!(
                "{} {} into the {} {}.",
                self.name(),
                p,
                self.pick(PLACES),
                self.pick(ADVERBS)
            ),
        }
    }

    /// A sentence in the same frame as a spell sentence but with an ordinary
    /// word where the spell would be.
    pub fn contrast_sentence(&mut self, filler: &str) -> String {
        format!("{} raised {} wand and shouted, \"{}!\"", self.name(), self.pick(POSSESSIVES), capitalize(filler))
    }

    pub fn document(&mut self, cfg: &SynthConfig, spells: &[SpellPhrase]) -> String {
        let paragraphs = self.range(cfg.paragraphs_per_doc);
        let mut out = Vec::with_capacity(paragraphs);
        for _ in 0..paragraphs {
            let n = self.range(cfg.sentences_per_paragraph);
            let mut sentences = Vec::with_capacity(n);
            for _ in 0..n {
                if !spells.is_empty() && self.chance(cfg.spell_rate) {
                    let s = spells[self.rng.below(spells.len() as u64) as usize].clone();
                    sentences.push(self.spell_sentence(&s));
                } else {
                    sentences.push(self.background_sentence());
                }
            }
            out.push(sentences.join(" "));
        }
        out.join("\n\n") + "\n"
    }
}

/// Raw (un-normalized) document texts.
pub fn generate_texts(cfg: &SynthConfig, lexicon: Option<&SpellLexicon>) -> Vec<String> {
    let spells = lexicon.map(spell_phrases).unwrap_or_default();
    let mut g = Generator::new(cfg.seed);
    (0..cfg.documents).map(|_| g.document(cfg, &spells)).collect()
}

pub fn generate_documents(cfg: &SynthConfig, lexicon: Option<&SpellLexicon>, role: DocRole) -> Vec<RawDocument> {
    generate_texts(cfg, lexicon)
        .iter()
        .enumerate()
        .map(|(i, t)| RawDocument::new(format!("synth{i:03}"), t, role).expect("generated text is non-empty"))
        .collect()
}

/// Spell-free prose, used to build the desk vocabulary.
pub fn background_text(seed: u64, sentences: usize) -> String {
    let mut g = Generator::new(seed);
    (0..sentences)
        .map(|_| g.background_sentence())
        .collect::<Vec<_>>()
        .join("\n")
        .to_lowercase()
}

/// A small labeled sequence set: `positives` spell sentences and `negatives`
/// background sentences, interleaved deterministically.
pub fn sequence_examples(lexicon: &SpellLexicon, positives: usize, negatives: usize, seed: u64) -> Vec<SeqExample> {
    let spells: Vec<SpellPhrase> = spell_phrases(lexicon)
        .into_iter()
        .filter(|s| s.kind == SpellKind::Incantation)
        .collect();
    let mut g = Generator::new(seed);
    let mut out = Vec::with_capacity(positives + negatives);
    for i in 0..positives {
        let s = &spells[i % spells.len()];
        out.push(SeqExample {
            seg_id: format!("pos:{i}"),
            text: g.spell_sentence(s).to_lowercase(),
            label: SeqLabel::Positive,
        });
    }
    for i in 0..negatives {
        out.push(SeqExample {
            seg_id: format!("neg:{i}"),
            text: g.background_sentence().to_lowercase(),
            label: SeqLabel::Negative,
        });
    }
    g.rng.shuffle(&mut out);
    out
}

/// Pairs of sentences identical in frame, differing only in whether the
/// shouted word is an incantation. The spell is the only class signal.
pub fn contrast_examples(lexicon: &SpellLexicon, pairs: usize, seed: u64) -> Vec<SeqExample> {
    let spells: Vec<SpellPhrase> = spell_phrases(lexicon)
        .into_iter()
        .filter(|s| s.kind == SpellKind::Incantation)
        .collect();
    let mut g = Generator::new(seed);
    let mut out = Vec::with_capacity(pairs * 2);
    for i in 0..pairs {
        let spell = &spells[i % spells.len()].phrase;
        let filler = g.pick(INTERJECTIONS);
        out.push(SeqExample {
            seg_id: format!("pos:{i}"),
            text: g.contrast_sentence(spell).to_lowercase(),
            label: SeqLabel::Positive,
        });
        out.push(SeqExample {
            seg_id: format!("neg:{i}"),
            text: g.contrast_sentence(filler).to_lowercase(),
            label: SeqLabel::Negative,
        });
    }
    g.rng.shuffle(&mut out);
    out
}

/// Files shipped under `data/`, as `(relative path, contents)`: the desk
/// vocabulary, the wordlists for the dictionary baseline and a small
/// synthetic corpus cast with spells from `lexicon`. Fully deterministic.
pub fn bundled_files(lexicon: &SpellLexicon) -> Vec<(String, String)> {
    let mut out = Vec::new();
    let vocab = crate::tokenizer::build_vocab(&[background_text(11, 20_000)], 4000);
    out.push(("desk_vocab.txt".to_string(), vocab.to_file_string()));
    out.push(("common_english.txt".to_string(), common_words().join("\n") + "\n"));
    out.push(("character_names.txt".to_string(), CHARACTER_NAMES.join("\n") + "\n"));
    for (role, documents, spell_rate, seed) in [("train", 10, 0.12, 101), ("eval", 3, 0.1, 202)] {
        let cfg = SynthConfig {
            documents,
            paragraphs_per_doc: (12, 24),
            sentences_per_paragraph: (1, 5),
            spell_rate,
            seed,
        };
        for (i, text) in generate_texts(&cfg, Some(lexicon)).into_iter().enumerate() {
            out.push((format!("synthetic/{role}/chapter{:02}.txt", i + 1), text));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic() {
        let cfg = SynthConfig {
            documents: 2,
            ..Default::default()
        };
        assert_eq!(generate_texts(&cfg, None), generate_texts(&cfg, None));
    }

    #[test]
    fn names_are_not_common_words() {
        let words = common_words();
        for n in CHARACTER_NAMES {
            assert!(!words.iter().any(|w| w == n), "{n}");
        }
    }
}
