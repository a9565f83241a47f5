use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::tokenizer::Tokenizer;
use crate::{seeds, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ControlCondition {
    Original,
    Shuffled,
    RandomSameLength,
}

impl ControlCondition {
    pub const ALL: [ControlCondition; 3] = [Self::Original, Self::Shuffled, Self::RandomSameLength];

    pub fn label(self) -> &'static str {
        match self {
            Self::Original => "ORIGINAL",
            Self::Shuffled => "SHUFFLED",
            Self::RandomSameLength => "RANDOM_SAME_LENGTH",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_uppercase().replace('-', "_");
        Self::ALL
            .into_iter()
            .find(|c| c.label() == norm)
            .ok_or_else(|| Error::parse(format!("unknown control condition {s:?}")))
    }
}

/// Applies a control to one contextualized token sequence.
pub fn apply_control(ids: &[u32], mode: ControlCondition, seed: u64, index: u64, tokenizer: &Tokenizer) -> Vec<u32> {
    match mode {
        ControlCondition::Original => ids.to_vec(),
        ControlCondition::Shuffled => {
            let mut out = ids.to_vec();
            out.shuffle(&mut seeds::stream_indexed(seed, "alignment.control.shuffle", index));
            out
        }
        ControlCondition::RandomSameLength => {
            let mut rng = seeds::stream_indexed(seed, "alignment.control.random", index);
            ids.iter().map(|_| tokenizer.sample_id(rng.random())).collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::Vocab;

    #[test]
    fn controls_preserve_what_they_promise() {
        let tok = Tokenizer::Bpe(Vocab::base());
        let ids: Vec<u32> = (0..40).map(|i| (i * 7 % 50) as u32).collect();
        assert_eq!(apply_control(&ids, ControlCondition::Original, 1, 0, &tok), ids);

        let mut sh = apply_control(&ids, ControlCondition::Shuffled, 1, 0, &tok);
        assert_ne!(sh, ids);
        sh.sort_unstable();
        let mut sorted = ids.clone();
        sorted.sort_unstable();
        assert_eq!(sh, sorted);

        let rnd = apply_control(&ids, ControlCondition::RandomSameLength, 1, 0, &tok);
        assert_eq!(rnd.len(), ids.len());
        assert!(rnd.iter().all(|&t| t < 256));
    }

    #[test]
    fn labels_round_trip() {
        for c in ControlCondition::ALL {
            assert_eq!(ControlCondition::parse(c.label()).unwrap(), c);
        }
        assert_eq!(ControlCondition::parse("random-same-length").unwrap(), ControlCondition::RandomSameLength);
    }
}
