//! Bundled stimulus materials: a small template grammar over a fixed lexicon,
//! the function-word stop list, and pronounceable non-word construction.
//!
//! Word choice within each category is Zipf-distributed, so a BPE vocabulary
//! trained on grammar output learns frequent words as single tokens and splits
//! rare ones.

use std::collections::HashSet;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::Result;

/// Version tag of the bundled word lists; bump when any list changes.
pub const LEXICON_VERSION: &str = "lexicon-v1";

pub const DETERMINERS: &[&str] = &["the", "a", "this", "that", "every", "some", "my", "her", "his", "our"];
pub const PREPOSITIONS: &[&str] = &["in", "on", "near", "under", "with", "behind", "from", "across", "beside", "over"];
pub const AUXILIARIES: &[&str] = &["will", "can", "should", "might", "must", "could", "would", "may"];
pub const CONJUNCTIONS: &[&str] = &["and", "but", "while", "because"];
pub const PRONOUNS: &[&str] = &["she", "he", "they", "we", "it", "you"];
/// Perfect auxiliary inserted after a modal.
pub const PERFECT: &[&str] = &["have"];

pub const NOUNS: &[&str] = &[
    "man", "dog", "woman", "child", "cat", "teacher", "house", "car", "city", "friend",
    "boy", "girl", "door", "table", "river", "garden", "doctor", "letter", "window", "horse",
    "book", "farmer", "road", "bird", "student", "kitchen", "mother", "father", "tree", "school",
    "baker", "village", "soldier", "painter", "bridge", "forest", "sailor", "market", "lawyer", "island",
    "engine", "blanket", "violin", "meadow", "lantern", "harbor", "orchard", "carpenter", "merchant", "parrot",
    "glacier", "pelican", "tapestry", "chandelier", "accordion", "lighthouse", "porcupine", "saxophone", "caravan", "monastery",
];
pub const VERBS_TRANSITIVE: &[&str] = &[
    "saw", "found", "took", "liked", "helped", "called", "watched", "followed", "opened", "visited",
    "painted", "carried", "pushed", "noticed", "washed", "greeted", "chased", "fixed", "cleaned", "built",
    "admired", "borrowed", "rescued", "polished", "inspected", "abandoned", "decorated", "photographed", "interrogated", "embroidered",
];
pub const VERBS_INTRANSITIVE: &[&str] = &[
    "slept", "ran", "smiled", "laughed", "arrived", "waited", "left", "walked", "cried", "danced",
    "sang", "jumped", "shouted", "rested", "worked", "trembled", "whispered", "hesitated", "wandered", "shivered",
];
pub const ADJECTIVES: &[&str] = &[
    "old", "big", "small", "young", "good", "new", "happy", "red", "long", "tired",
    "quiet", "green", "warm", "dark", "kind", "bright", "heavy", "gentle", "proud", "clever",
    "ancient", "curious", "fragile", "elegant", "nervous", "magnificent", "turquoise", "melancholy", "luminous", "peculiar",
];
pub const ADVERBS: &[&str] = &[
    "quickly", "slowly", "often", "again", "quietly", "loudly", "happily", "early", "late", "suddenly",
    "carefully", "gracefully", "reluctantly", "cheerfully", "thoroughly",
];

/// Function words: closed-class items preserved in Jabberwocky items.
pub fn function_words() -> HashSet<&'static str> {
    DETERMINERS
        .iter()
        .chain(PREPOSITIONS)
        .chain(AUXILIARIES)
        .chain(CONJUNCTIONS)
        .chain(PRONOUNS)
        .chain(PERFECT)
        .copied()
        .collect()
}

pub fn is_function_word(word: &str) -> bool {
    DETERMINERS
        .iter()
        .chain(PREPOSITIONS)
        .chain(AUXILIARIES)
        .chain(CONJUNCTIONS)
        .chain(PRONOUNS)
        .chain(PERFECT)
        .any(|w| *w == word)
}

/// Every word the grammar can emit.
pub fn lexicon() -> HashSet<&'static str> {
    let mut out = function_words();
    for list in [NOUNS, VERBS_TRANSITIVE, VERBS_INTRANSITIVE, ADJECTIVES, ADVERBS] {
        out.extend(list.iter().copied());
    }
    out
}

fn zipf_pick<'a>(rng: &mut ChaCha8Rng, list: &[&'a str]) -> &'a str {
    // Weight of rank r is 1 / (r + 1).
    let total: f64 = (1..=list.len()).map(|r| 1.0 / r as f64).sum();
    let mut u = rng.random::<f64>() * total;
    for (r, w) in list.iter().enumerate() {
        u -= 1.0 / (r + 1) as f64;
        if u <= 0.0 {
            return w;
        }
    }
    list[list.len() - 1]
}

#[derive(Clone, Debug)]
enum Slot {
    Det,
    Noun { adjectives: usize },
}

#[derive(Clone, Debug)]
struct Clause {
    subject: Vec<Slot>,
    aux: bool,
    transitive: bool,
    object: Vec<Slot>,
    adverb: bool,
    pps: usize,
}

/// Samples one sentence of exactly `length` words (lowercase, no punctuation).
///
/// The core clause is `Det N V`; expansions add adjectives, an auxiliary, a
/// direct object, an adverb, or prepositional phrases until the budget is spent.
pub fn sentence(rng: &mut ChaCha8Rng, length: usize) -> String {
    let length = length.max(3);
    let mut clause = Clause {
        subject: vec![Slot::Det, Slot::Noun { adjectives: 0 }],
        aux: false,
        transitive: false,
        object: Vec::new(),
        adverb: false,
        pps: 0,
    };
    let mut remaining = length - 3;
    while remaining > 0 {
        // (size, kind)
        let mut options: Vec<(usize, u8)> = vec![(1, 0)];
        if !clause.aux && remaining >= 2 {
            options.push((2, 1));
        }
        if !clause.transitive && remaining >= 2 {
            options.push((2, 2));
        }
        if !clause.adverb {
            options.push((1, 3));
        }
        if remaining >= 3 && clause.pps < 2 {
            options.push((3, 4));
        }
        let &(size, kind) = options.choose(rng).expect("nonempty");
        match kind {
            0 => {
                // adjective on the subject or object noun
                let target = if !clause.object.is_empty() && rng.random::<bool>() {
                    &mut clause.object
                } else {
                    &mut clause.subject
                };
                if let Some(Slot::Noun { adjectives }) = target.last_mut() {
                    *adjectives += 1;
                }
            }
            1 => clause.aux = true,
            2 => {
                clause.transitive = true;
                clause.object = vec![Slot::Det, Slot::Noun { adjectives: 0 }];
            }
            3 => clause.adverb = true,
            _ => clause.pps += 1,
        }
        remaining -= size;
    }
    render(rng, &clause)
}

fn render(rng: &mut ChaCha8Rng, clause: &Clause) -> String {
    let mut words: Vec<&str> = Vec::new();
    let noun_phrase = |rng: &mut ChaCha8Rng, slots: &[Slot], words: &mut Vec<&str>| {
        for slot in slots {
            match slot {
                Slot::Det => words.push(zipf_pick(rng, DETERMINERS)),
                Slot::Noun { adjectives } => {
                    for _ in 0..*adjectives {
                        words.push(zipf_pick(rng, ADJECTIVES));
                    }
                    words.push(zipf_pick(rng, NOUNS));
                }
            }
        }
    };
    noun_phrase(rng, &clause.subject, &mut words);
    if clause.aux {
        words.push(zipf_pick(rng, AUXILIARIES));
        // modal + "have" + participle keeps the past-tense verb lists usable
        words.push(PERFECT[0]);
    }
    if clause.transitive {
        words.push(zipf_pick(rng, VERBS_TRANSITIVE));
        noun_phrase(rng, &clause.object, &mut words);
    } else {
        words.push(zipf_pick(rng, VERBS_INTRANSITIVE));
    }
    if clause.adverb {
        words.push(zipf_pick(rng, ADVERBS));
    }
    for _ in 0..clause.pps {
        words.push(zipf_pick(rng, PREPOSITIONS));
        words.push(zipf_pick(rng, DETERMINERS));
        words.push(zipf_pick(rng, NOUNS));
    }
    words.join(" ")
}

/// Corpus of `n` sentences with lengths drawn uniformly from `min_len..=max_len`.
pub fn corpus(rng: &mut ChaCha8Rng, n: usize, min_len: usize, max_len: usize) -> Vec<String> {
    (0..n)
        .map(|_| {
            let len = rng.random_range(min_len..=max_len.max(min_len));
            sentence(rng, len)
        })
        .collect()
}

const ONSETS: &[&str] = &[
    "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "bl", "pr", "st", "tr", "gl", "sp", "fl", "kr",
];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ay", "oo"];
const CODAS: &[&str] = &["", "", "", "n", "t", "k", "m", "s", "p"];

/// A pronounceable non-word of 1–3 syllables that is not in `lexicon`.
pub fn nonword(rng: &mut ChaCha8Rng, lexicon: &HashSet<&str>) -> String {
    loop {
        let syllables = rng.random_range(1..=3);
        let mut w = String::new();
        for _ in 0..syllables {
            w.push_str(ONSETS.choose(rng).expect("nonempty"));
            w.push_str(VOWELS.choose(rng).expect("nonempty"));
        }
        w.push_str(CODAS.choose(rng).expect("nonempty"));
        if w.len() >= 3 && !lexicon.contains(w.as_str()) {
            return w;
        }
    }
}

/// A single consonant-vowel syllable, used to pad non-word strings.
pub fn syllable(rng: &mut ChaCha8Rng) -> String {
    let mut s = String::new();
    s.push_str(ONSETS[..14].choose(rng).expect("nonempty"));
    s.push_str(VOWELS[..5].choose(rng).expect("nonempty"));
    s
}

/// Whitespace-separated words of a stimulus string.
pub fn words(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}

/// Reads a plain-text corpus where documents are separated by blank lines.
pub fn split_documents(raw: &str) -> Vec<String> {
    raw.split("\n\n")
        .map(|d| d.split_whitespace().collect::<Vec<_>>().join(" "))
        .filter(|d| !d.is_empty())
        .collect()
}

/// Writes documents separated by blank lines.
pub fn join_documents(docs: &[String]) -> String {
    let mut out = docs.join("\n\n");
    out.push('\n');
    out
}

pub fn read_corpus_file(path: &std::path::Path) -> Result<Vec<String>> {
    Ok(split_documents(&std::fs::read_to_string(path)?))
}
