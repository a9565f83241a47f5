use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::model::{Decoder, FeatureSource};
use crate::numerics::{pearson_r, zscore_in_place};
use crate::tokenizer::Vocab;
use crate::{seeds, Error, Result};

/// Per-token surprisal (nats) of a token sequence; `None` where a token has no context.
pub trait TokenSurprisal {
    fn surprisals(&self, ids: &[u32]) -> Result<Vec<Option<f64>>>;
}

/// Trained decoder over a frozen feature source, scored with strided windows.
#[derive(Clone, Copy, Debug)]
pub struct LanguageModel<'a> {
    pub decoder: &'a Decoder,
    pub source: &'a FeatureSource,
    /// Tokens advanced between windows; later windows score only new tokens.
    pub stride: usize,
}

impl<'a> LanguageModel<'a> {
    pub fn new(decoder: &'a Decoder, source: &'a FeatureSource) -> Self {
        let stride = (decoder.config().context_length / 2).max(1);
        Self { decoder, source, stride }
    }
}

impl TokenSurprisal for LanguageModel<'_> {
    fn surprisals(&self, ids: &[u32]) -> Result<Vec<Option<f64>>> {
        let n = ids.len();
        let context = self.decoder.config().context_length;
        let mut out = vec![None; n];
        let mut next = 1;
        let mut s = 0;
        while next < n {
            let end = (s + context).min(n - 1);
            let feats = self.source.features(&ids[s..end])?;
            let nll = self.decoder.token_nll(&feats, &ids[s + 1..end + 1])?;
            for (off, v) in nll.into_iter().enumerate() {
                let j = s + 1 + off;
                if j >= next {
                    out[j] = Some(v);
                }
            }
            next = end + 1;
            s += self.stride.min(context);
            s = s.max(next.saturating_sub(context));
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReadingRow {
    pub story_id: String,
    pub word_index: usize,
    pub word: String,
    pub mean_rt_ms: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReadingTimeDataset {
    pub rows: Vec<ReadingRow>,
}

impl ReadingTimeDataset {
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let rows = r.deserialize().collect::<std::result::Result<Vec<ReadingRow>, _>>()?;
        Ok(Self { rows })
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.rows {
            w.write_record([
                row.story_id.as_str(),
                &row.word_index.to_string(),
                &row.word,
                &format!("{:?}", row.mean_rt_ms),
            ])?;
        }
        let body = String::from_utf8(w.into_inner().map_err(|e| Error::parse(e.to_string()))?)
            .map_err(|e| Error::parse(e.to_string()))?;
        Ok(format!("story_id,word_index,word,mean_rt_ms\n{body}"))
    }

    /// Rows grouped by story in first-appearance order, each sorted by word index.
    pub fn stories(&self) -> Vec<(String, Vec<&ReadingRow>)> {
        let mut out: Vec<(String, Vec<&ReadingRow>)> = Vec::new();
        for row in &self.rows {
            match out.iter_mut().find(|(id, _)| *id == row.story_id) {
                Some((_, v)) => v.push(row),
                None => out.push((row.story_id.clone(), vec![row])),
            }
        }
        for (_, v) in out.iter_mut() {
            v.sort_by_key(|r| r.word_index);
        }
        out
    }
}

/// Token ids of a story and, per token, the index of the word it belongs to
/// (`None` when a token straddles a word boundary).
pub fn align_words(vocab: &Vocab, words: &[&str]) -> Result<(Vec<u32>, Vec<Option<usize>>)> {
    // whitespace attaches to the following word: " w0 w1 ..."
    let mut spans = Vec::with_capacity(words.len());
    let mut text = String::new();
    for w in words {
        let start = text.len();
        text.push(' ');
        text.push_str(w);
        spans.push((start, text.len()));
    }
    let ids = vocab.encode(&text).ids;
    let mut owner = Vec::with_capacity(ids.len());
    let mut offset = 0;
    let mut word = 0;
    for &id in &ids {
        let len = vocab
            .token_bytes(id)
            .ok_or(Error::OutOfRange { index: id as usize, limit: vocab.len() })?
            .len();
        let (start, end) = (offset, offset + len);
        while word < spans.len() && spans[word].1 <= start {
            word += 1;
        }
        owner.push((word < spans.len() && end <= spans[word].1).then_some(word));
        offset = end;
    }
    if offset != text.len() {
        return Err(Error::parse("token bytes do not reassemble the story text"));
    }
    Ok((ids, owner))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WordScore {
    pub story_id: String,
    pub word_index: usize,
    pub surprisal: f64,
    pub mean_rt_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BehaviorResult {
    pub r: f64,
    pub scored: usize,
    /// Words whose tokens straddled a word boundary.
    pub misaligned: usize,
    /// Words containing a token without preceding context (story-initial).
    pub no_context: usize,
    pub words: Vec<WordScore>,
}

/// Summed token surprisal per word for every story.
pub fn word_surprisals(
    model: &dyn TokenSurprisal,
    vocab: &Vocab,
    dataset: &ReadingTimeDataset,
) -> Result<(Vec<WordScore>, usize, usize)> {
    let mut scores = Vec::new();
    let (mut misaligned, mut no_context) = (0, 0);
    for (story, rows) in dataset.stories() {
        let words: Vec<&str> = rows.iter().map(|r| r.word.as_str()).collect();
        let (ids, owner) = align_words(vocab, &words)?;
        let surprisal = model.surprisals(&ids)?;
        let mut sum = vec![0.0; words.len()];
        let mut bad = vec![false; words.len()];
        let mut missing = vec![false; words.len()];
        let mut prev_word = 0;
        for (t, o) in owner.iter().enumerate() {
            match o {
                Some(w) => {
                    prev_word = *w;
                    match surprisal[t] {
                        Some(s) => sum[*w] += s,
                        None => missing[*w] = true,
                    }
                }
                None => {
                    bad[prev_word] = true;
                    if prev_word + 1 < words.len() {
                        bad[prev_word + 1] = true;
                    }
                }
            }
        }
        for (w, row) in rows.iter().enumerate() {
            if bad[w] {
                misaligned += 1;
            } else if missing[w] {
                no_context += 1;
            } else {
                scores.push(WordScore {
                    story_id: story.clone(),
                    word_index: row.word_index,
                    surprisal: sum[w],
                    mean_rt_ms: row.mean_rt_ms,
                });
            }
        }
    }
    Ok((scores, misaligned, no_context))
}

/// Pearson r between per-word summed surprisal and mean reading time.
pub fn behavioral_alignment(
    model: &dyn TokenSurprisal,
    vocab: &Vocab,
    dataset: &ReadingTimeDataset,
) -> Result<BehaviorResult> {
    let (words, misaligned, no_context) = word_surprisals(model, vocab, dataset)?;
    let s: Vec<f64> = words.iter().map(|w| w.surprisal).collect();
    let rt: Vec<f64> = words.iter().map(|w| w.mean_rt_ms).collect();
    let r = pearson_r(&s, &rt)?;
    Ok(BehaviorResult {
        r,
        scored: words.len(),
        misaligned,
        no_context,
        words,
    })
}

/// Reading times correlated with `surprisal` at population correlation `r`:
/// `300 + 40·(z + σε)` with `σ = sqrt(1/r² − 1)`; `r = 1` is an exact affine map.
pub fn planted_reading_times(surprisal: &[f64], r: f64, seed: u64) -> Result<Vec<f64>> {
    if !(r > 0.0 && r <= 1.0) {
        return Err(Error::Domain(format!("planted correlation must be in (0, 1], got {r}")));
    }
    let mut z = surprisal.to_vec();
    zscore_in_place(&mut z);
    let sigma = (1.0 / (r * r) - 1.0).max(0.0).sqrt();
    let mut rng = seeds::stream(seed, "decoder.planted-rt");
    Ok(z.iter()
        .map(|v| {
            let noise: f64 = if sigma > 0.0 { rng.sample(StandardNormal) } else { 0.0 };
            300.0 + 40.0 * (v + sigma * noise)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::bpe_train;

    #[test]
    fn alignment_covers_every_token() {
        let vocab = bpe_train(&["the dog saw the cat", "the cat ran"], 300).unwrap();
        let words = ["the", "dog,", "ran."];
        let (ids, owner) = align_words(&vocab, &words).unwrap();
        assert_eq!(ids.len(), owner.len());
        assert!(owner.iter().all(Option::is_some));
        assert_eq!(owner.first(), Some(&Some(0)));
        assert_eq!(owner.last(), Some(&Some(2)));
    }

    struct Fixed;
    impl TokenSurprisal for Fixed {
        fn surprisals(&self, ids: &[u32]) -> Result<Vec<Option<f64>>> {
            Ok(ids.iter().enumerate().map(|(i, &t)| (i > 0).then_some(t as f64 * 0.01 + 1.0)).collect())
        }
    }

    #[test]
    fn exact_construction_gives_unit_correlation() {
        let vocab = bpe_train(&["a quick brown fox jumps over the lazy dog"], 290).unwrap();
        let words: Vec<String> = "a quick brown fox jumps over the lazy dog again and again"
            .split(' ')
            .map(String::from)
            .collect();
        let mut ds = ReadingTimeDataset {
            rows: words
                .iter()
                .enumerate()
                .map(|(i, w)| ReadingRow {
                    story_id: "s".into(),
                    word_index: i,
                    word: w.clone(),
                    mean_rt_ms: 0.0,
                })
                .collect(),
        };
        let (scores, _, first) = word_surprisals(&Fixed, &vocab, &ds).unwrap();
        assert_eq!(first, 1);
        let rts = planted_reading_times(&scores.iter().map(|s| s.surprisal).collect::<Vec<_>>(), 1.0, 0).unwrap();
        for (s, rt) in scores.iter().zip(rts) {
            ds.rows[s.word_index].mean_rt_ms = rt;
        }
        let res = behavioral_alignment(&Fixed, &vocab, &ds).unwrap();
        assert!((res.r - 1.0).abs() < 1e-12);
        assert_eq!(res.no_context, 1);
        assert_eq!(res.scored, words.len() - 1);
    }

    #[test]
    fn csv_round_trip() {
        let ds = ReadingTimeDataset {
            rows: vec![ReadingRow {
                story_id: "s1".into(),
                word_index: 0,
                word: "hello,".into(),
                mean_rt_ms: 312.5,
            }],
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rt.csv");
        std::fs::write(&p, ds.to_csv().unwrap()).unwrap();
        assert_eq!(ReadingTimeDataset::load(&p).unwrap(), ds);
    }
}
