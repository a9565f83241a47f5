//! Byte-level BPE plus a hashed word tokenizer.

mod bpe;
mod word;

pub use bpe::{bpe_train, pre_tokenize, Vocab, BASE_ALPHABET, BOS_ID, UNK_ID};
pub use word::{word_id, word_tokenize, WordTokenizer, WORD_ID_SPACE};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Encoded text: token ids plus the source they came from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub ids: Vec<u32>,
    pub text: String,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TokenizerKind {
    Bpe,
    Word,
}

impl TokenizerKind {
    pub fn label(self) -> &'static str {
        match self {
            TokenizerKind::Bpe => "bpe",
            TokenizerKind::Word => "word",
        }
    }
}

/// The tokenizer driving an encoder: either a trained BPE vocabulary or the
/// open-vocabulary word hasher.
#[derive(Clone, Debug, PartialEq)]
pub enum Tokenizer {
    Bpe(Vocab),
    Word(WordTokenizer),
}

impl Tokenizer {
    pub fn kind(&self) -> TokenizerKind {
        match self {
            Tokenizer::Bpe(_) => TokenizerKind::Bpe,
            Tokenizer::Word(_) => TokenizerKind::Word,
        }
    }

    pub fn encode(&self, text: &str) -> TokenSequence {
        match self {
            Tokenizer::Bpe(v) => v.encode(text),
            Tokenizer::Word(w) => w.encode(text),
        }
    }

    /// Number of distinct ids the tokenizer can emit.
    pub fn id_space(&self) -> u64 {
        match self {
            Tokenizer::Bpe(v) => v.len() as u64,
            Tokenizer::Word(_) => WORD_ID_SPACE,
        }
    }

    /// Ids eligible for random same-length control sequences (specials excluded).
    pub fn sample_id(&self, u: u64) -> u32 {
        match self {
            Tokenizer::Bpe(v) => {
                let normal = v.len() as u64 - 2;
                let k = u % normal;
                // skip the two specials that sit right after the byte alphabet
                if k < UNK_ID as u64 {
                    k as u32
                } else {
                    (k + 2) as u32
                }
            }
            Tokenizer::Word(_) => (u % WORD_ID_SPACE) as u32,
        }
    }

    /// Stable fingerprint used in cache keys and run manifests.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        match self {
            Tokenizer::Bpe(v) => {
                h.update(b"bpe\n");
                h.update(v.to_text().as_bytes());
            }
            Tokenizer::Word(_) => h.update(b"word-fnv1a64-fold32\n"),
        }
        hex16(&h.finalize())
    }

    pub fn as_bpe(&self) -> Result<&Vocab> {
        match self {
            Tokenizer::Bpe(v) => Ok(v),
            Tokenizer::Word(_) => Err(Error::precondition("operation needs a BPE vocabulary")),
        }
    }
}

pub(crate) fn hex16(bytes: &[u8]) -> String {
    bytes[..8].iter().map(|b| format!("{b:02x}")).collect()
}
