use std::collections::HashMap;
use std::fmt::Write as _;

use super::TokenSequence;
use crate::{Error, Result};

/// Byte alphabet (256) plus the two special tokens.
pub const BASE_ALPHABET: usize = 258;
pub const UNK_ID: u32 = 256;
pub const BOS_ID: u32 = 257;

const FORMAT_HEADER: &str = "#bpe-vocab v1";

/// Trained byte-level BPE vocabulary.
///
/// Ids `0..256` are raw bytes, 256 and 257 are `<unk>` and `<bos>`, and every
/// later id is the output of the merge at the same offset.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocab {
    tokens: Vec<Vec<u8>>,
    merges: Vec<(u32, u32)>,
    ranks: HashMap<(u32, u32), u32>,
}

/// Splits bytes into pre-tokens; leading whitespace attaches to the following word.
pub fn pre_tokenize(bytes: &[u8]) -> Vec<&[u8]> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < bytes.len() {
        // whitespace run, then the word it attaches to
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        out.push(&bytes[start..i]);
        start = i;
    }
    out
}

impl Vocab {
    /// Vocabulary with the byte alphabet and specials only.
    pub fn base() -> Self {
        let mut tokens: Vec<Vec<u8>> = (0..=255u8).map(|b| vec![b]).collect();
        tokens.push(Vec::new());
        tokens.push(Vec::new());
        Self {
            tokens,
            merges: Vec::new(),
            ranks: HashMap::new(),
        }
    }

    fn push_merge(&mut self, pair: (u32, u32)) -> u32 {
        let id = self.tokens.len() as u32;
        let mut bytes = self.tokens[pair.0 as usize].clone();
        bytes.extend_from_slice(&self.tokens[pair.1 as usize]);
        self.tokens.push(bytes);
        self.ranks.insert(pair, self.merges.len() as u32);
        self.merges.push(pair);
        id
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn merges(&self) -> &[(u32, u32)] {
        &self.merges
    }

    pub fn token_bytes(&self, id: u32) -> Option<&[u8]> {
        self.tokens.get(id as usize).map(Vec::as_slice)
    }

    fn merge_output(&self, rank: u32) -> u32 {
        BASE_ALPHABET as u32 + rank
    }

    fn encode_chunk(&self, chunk: &[u8], out: &mut Vec<u32>) {
        let mut syms: Vec<u32> = chunk.iter().map(|&b| b as u32).collect();
        loop {
            let best = syms
                .windows(2)
                .filter_map(|w| self.ranks.get(&(w[0], w[1])).copied())
                .min();
            let Some(rank) = best else { break };
            let pair = self.merges[rank as usize];
            let merged = self.merge_output(rank);
            let mut next = Vec::with_capacity(syms.len());
            let mut i = 0;
            while i < syms.len() {
                if i + 1 < syms.len() && (syms[i], syms[i + 1]) == pair {
                    next.push(merged);
                    i += 2;
                } else {
                    next.push(syms[i]);
                    i += 1;
                }
            }
            syms = next;
        }
        out.extend_from_slice(&syms);
    }

    pub fn encode_bytes(&self, bytes: &[u8]) -> Vec<u32> {
        let mut ids = Vec::with_capacity(bytes.len());
        let mut cache: HashMap<&[u8], (usize, usize)> = HashMap::new();
        for chunk in pre_tokenize(bytes) {
            if let Some(&(s, e)) = cache.get(chunk) {
                ids.extend_from_within(s..e);
                continue;
            }
            let s = ids.len();
            self.encode_chunk(chunk, &mut ids);
            cache.insert(chunk, (s, ids.len()));
        }
        ids
    }

    pub fn encode(&self, text: &str) -> TokenSequence {
        TokenSequence {
            ids: self.encode_bytes(text.as_bytes()),
            text: text.to_string(),
        }
    }

    pub fn decode_bytes(&self, ids: &[u32]) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        for &id in ids {
            let t = self.tokens.get(id as usize).ok_or(Error::OutOfRange {
                index: id as usize,
                limit: self.tokens.len(),
            })?;
            out.extend_from_slice(t);
        }
        Ok(out)
    }

    /// Decodes to text; invalid UTF-8 sequences are replaced.
    pub fn decode(&self, ids: &[u32]) -> Result<String> {
        Ok(String::from_utf8_lossy(&self.decode_bytes(ids)?).into_owned())
    }

    /// Text serialization: header, one escaped token per line, then the merges.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{FORMAT_HEADER}").unwrap();
        writeln!(s, "vocab_size {}", self.tokens.len()).unwrap();
        writeln!(s, "merges {}", self.merges.len()).unwrap();
        s.push_str("[tokens]\n");
        for (id, t) in self.tokens.iter().enumerate() {
            match id as u32 {
                UNK_ID => s.push_str("<unk>"),
                BOS_ID => s.push_str("<bos>"),
                _ => escape_into(t, &mut s),
            }
            s.push('\n');
        }
        s.push_str("[merges]\n");
        for (a, b) in &self.merges {
            writeln!(s, "{a} {b}").unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(FORMAT_HEADER) {
            return Err(Error::parse("missing vocab header"));
        }
        let size = header_field(lines.next(), "vocab_size")?;
        let n_merges = header_field(lines.next(), "merges")?;
        if size != BASE_ALPHABET + n_merges {
            return Err(Error::parse("vocab_size disagrees with merge count"));
        }
        if lines.next() != Some("[tokens]") {
            return Err(Error::parse("missing [tokens] section"));
        }
        let mut tokens = Vec::with_capacity(size);
        for id in 0..size {
            let line = lines.next().ok_or_else(|| Error::parse("truncated token list"))?;
            tokens.push(match id as u32 {
                UNK_ID | BOS_ID => Vec::new(),
                _ => unescape(line)?,
            });
        }
        if lines.next() != Some("[merges]") {
            return Err(Error::parse("missing [merges] section"));
        }
        let mut vocab = Vocab::base();
        for (id, t) in tokens.iter().enumerate().take(256) {
            if t.as_slice() != [id as u8] {
                return Err(Error::parse(format!("byte token {id} is not the byte itself")));
            }
        }
        for _ in 0..n_merges {
            let line = lines.next().ok_or_else(|| Error::parse("truncated merges"))?;
            let mut it = line.split(' ').map(str::parse::<u32>);
            let (Some(Ok(a)), Some(Ok(b)), None) = (it.next(), it.next(), it.next()) else {
                return Err(Error::parse(format!("bad merge line {line:?}")));
            };
            let limit = vocab.len() as u32;
            if a >= limit || b >= limit || a == UNK_ID || a == BOS_ID || b == UNK_ID || b == BOS_ID {
                return Err(Error::parse(format!("merge {a} {b} references unknown tokens")));
            }
            let id = vocab.push_merge((a, b));
            if vocab.tokens[id as usize] != tokens[id as usize] {
                return Err(Error::parse(format!("token {id} does not match its merge")));
            }
        }
        Ok(vocab)
    }
}

fn header_field(line: Option<&str>, key: &str) -> Result<usize> {
    line.and_then(|l| l.strip_prefix(key))
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| Error::parse(format!("missing {key} header")))
}

fn escape_into(bytes: &[u8], out: &mut String) {
    for &b in bytes {
        if b.is_ascii_graphic() && b != b'\\' {
            out.push(b as char);
        } else {
            write!(out, "\\x{b:02x}").unwrap();
        }
    }
}

fn unescape(line: &str) -> Result<Vec<u8>> {
    let b = line.as_bytes();
    let mut out = Vec::with_capacity(b.len());
    let mut i = 0;
    while i < b.len() {
        if b[i] == b'\\' {
            let hex = line
                .get(i + 2..i + 4)
                .filter(|_| b.get(i + 1) == Some(&b'x'))
                .ok_or_else(|| Error::parse(format!("bad escape in {line:?}")))?;
            out.push(u8::from_str_radix(hex, 16).map_err(|_| Error::parse("bad hex escape"))?);
            i += 4;
        } else {
            out.push(b[i]);
            i += 1;
        }
    }
    Ok(out)
}

/// Trains a byte-level BPE vocabulary by greedy highest-frequency pair merging.
///
/// Stops at `vocab_size` or when no adjacent pair occurs at least twice. Ties
/// go to the lexicographically smallest (left bytes, right bytes) pair.
pub fn bpe_train<S: AsRef<str>>(corpus: &[S], vocab_size: usize) -> Result<Vocab> {
    if vocab_size < BASE_ALPHABET {
        return Err(Error::precondition(format!(
            "vocab_size {vocab_size} is below the base alphabet size {BASE_ALPHABET}"
        )));
    }
    let mut counts: HashMap<&[u8], usize> = HashMap::new();
    for doc in corpus {
        for chunk in pre_tokenize(doc.as_ref().as_bytes()) {
            *counts.entry(chunk).or_default() += 1;
        }
    }
    if counts.is_empty() {
        return Err(Error::precondition("empty corpus"));
    }
    // Sort for a reproducible word order independent of hashing.
    let mut words: Vec<(Vec<u32>, usize)> = counts
        .into_iter()
        .map(|(w, c)| (w.iter().map(|&b| b as u32).collect(), c))
        .collect();
    words.sort();

    let mut vocab = Vocab::base();
    while vocab.len() < vocab_size {
        let mut pairs: HashMap<(u32, u32), usize> = HashMap::new();
        for (syms, c) in &words {
            for w in syms.windows(2) {
                *pairs.entry((w[0], w[1])).or_default() += c;
            }
        }
        let best = pairs.into_iter().max_by(|(pa, ca), (pb, cb)| {
            ca.cmp(cb).then_with(|| {
                // smaller bytes win, so reverse the natural order
                let ka = (&vocab.tokens[pa.0 as usize], &vocab.tokens[pa.1 as usize]);
                let kb = (&vocab.tokens[pb.0 as usize], &vocab.tokens[pb.1 as usize]);
                kb.cmp(&ka)
            })
        });
        let Some((pair, count)) = best else { break };
        if count < 2 {
            break;
        }
        let merged = vocab.push_merge(pair);
        for (syms, _) in words.iter_mut() {
            if syms.len() < 2 {
                continue;
            }
            let mut i = 0;
            let mut next = Vec::with_capacity(syms.len());
            while i < syms.len() {
                if i + 1 < syms.len() && (syms[i], syms[i + 1]) == pair {
                    next.push(merged);
                    i += 2;
                } else {
                    next.push(syms[i]);
                    i += 1;
                }
            }
            *syms = next;
        }
    }
    Ok(vocab)
}
