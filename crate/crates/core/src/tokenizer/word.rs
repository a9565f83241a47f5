use super::TokenSequence;

/// Size of the hashed word-id space.
pub const WORD_ID_SPACE: u64 = 1 << 32;

/// Splits on whitespace and peels leading/trailing ASCII punctuation off each
/// word into single-character tokens.
pub fn word_tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for raw in text.split_whitespace() {
        let chars: Vec<char> = raw.chars().collect();
        let start = chars
            .iter()
            .position(|c| !c.is_ascii_punctuation())
            .unwrap_or(chars.len());
        let end = chars
            .iter()
            .rposition(|c| !c.is_ascii_punctuation())
            .map_or(start, |p| p + 1);
        for c in &chars[..start] {
            out.push(c.to_string());
        }
        if start < end {
            out.push(chars[start..end].iter().collect());
        }
        for c in &chars[end.max(start)..] {
            out.push(c.to_string());
        }
    }
    out
}

/// 64-bit FNV-1a with a splitmix64 finalizer, folded to 32 bits. The
/// finalizer spreads the near-identical hashes FNV gives to similar strings.
pub fn word_id(word: &str) -> u32 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    for b in word.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(PRIME);
    }
    h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^= h >> 31;
    ((h >> 32) ^ (h & 0xffff_ffff)) as u32
}

/// Open-vocabulary word tokenizer; ids are hashes of the surface form.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct WordTokenizer;

impl WordTokenizer {
    pub fn encode(&self, text: &str) -> TokenSequence {
        TokenSequence {
            ids: word_tokenize(text).iter().map(|w| word_id(w)).collect(),
            text: text.to_string(),
        }
    }
}
