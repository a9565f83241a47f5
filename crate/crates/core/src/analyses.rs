//! Condition-level analyses over sentences (S), shuffled words (W),
//! Jabberwocky (J) and shuffled non-words (N).

use std::collections::HashSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::encoder::{Aggregation, Encoder};
use crate::localizer::{extract, UnitMask};
use crate::numerics::{fisher_z, pearson_r, zscore_in_place};
use crate::tokenizer::Tokenizer;
use crate::{par, seeds, text, Error, RealMatrix, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Condition {
    S,
    W,
    J,
    N,
}

impl Condition {
    pub const ALL: [Condition; 4] = [Condition::S, Condition::W, Condition::J, Condition::N];

    pub fn label(self) -> &'static str {
        match self {
            Condition::S => "S",
            Condition::W => "W",
            Condition::J => "J",
            Condition::N => "N",
        }
    }
}

/// Four item-aligned condition lists; item `i` of W, J and N derives from item `i` of S.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionSet {
    pub s: Vec<String>,
    pub w: Vec<String>,
    pub j: Vec<String>,
    pub n: Vec<String>,
    pub seed: u64,
}

impl ConditionSet {
    pub fn get(&self, c: Condition) -> &[String] {
        match c {
            Condition::S => &self.s,
            Condition::W => &self.w,
            Condition::J => &self.j,
            Condition::N => &self.n,
        }
    }

    pub fn n_items(&self) -> usize {
        self.s.len()
    }
}

fn shuffle_words(text: &str, rng: &mut rand_chacha::ChaCha8Rng) -> String {
    let mut w = text::words(text);
    w.shuffle(rng);
    w.join(" ")
}

pub fn generate_conditions(seed: u64, n_items: usize, length: usize) -> Result<ConditionSet> {
    generate_conditions_excluding(seed, n_items, length, &HashSet::new())
}

/// Like [`generate_conditions`] but resamples any sentence found in `exclude`
/// (e.g. the localizer sentences).
pub fn generate_conditions_excluding(
    seed: u64,
    n_items: usize,
    length: usize,
    exclude: &HashSet<String>,
) -> Result<ConditionSet> {
    if n_items < 8 {
        return Err(Error::precondition(format!("need at least 8 items, got {n_items}")));
    }
    if length < 3 {
        return Err(Error::precondition(format!("sentences need at least 3 words, got {length}")));
    }
    let lexicon = text::lexicon();
    let mut rng = seeds::stream(seed, "analyses.conditions");
    let mut set = ConditionSet {
        s: Vec::with_capacity(n_items),
        w: Vec::with_capacity(n_items),
        j: Vec::with_capacity(n_items),
        n: Vec::with_capacity(n_items),
        seed,
    };
    while set.s.len() < n_items {
        let s = text::sentence(&mut rng, length);
        if exclude.contains(&s) {
            continue;
        }
        let j: Vec<String> = text::words(&s)
            .into_iter()
            .map(|w| {
                if text::is_function_word(w) {
                    w.to_string()
                } else {
                    text::nonword(&mut rng, &lexicon)
                }
            })
            .collect();
        let j = j.join(" ");
        set.w.push(shuffle_words(&s, &mut rng));
        set.n.push(shuffle_words(&j, &mut rng));
        set.j.push(j);
        set.s.push(s);
    }
    Ok(set)
}

/// Maps a stimulus string to a feature vector.
pub trait StimulusFeatures: Sync {
    fn features(&self, text: &str) -> Result<Vec<f64>>;
}

/// Token-mean activations of an encoder, optionally restricted to a mask.
#[derive(Clone, Copy, Debug)]
pub struct EncoderFeatures<'a> {
    pub encoder: &'a Encoder,
    pub tokenizer: &'a Tokenizer,
    pub mask: Option<&'a UnitMask>,
}

impl StimulusFeatures for EncoderFeatures<'_> {
    fn features(&self, text: &str) -> Result<Vec<f64>> {
        let rec = self.encoder.forward(&self.tokenizer.encode(text))?;
        match self.mask {
            Some(m) => extract(&rec, m, Aggregation::Mean),
            None => rec.aggregate_units(Aggregation::Mean, 0..rec.positions()),
        }
    }
}

/// Per-condition items × units feature matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionFeatures {
    pub by_condition: [RealMatrix; 4],
}

impl ConditionFeatures {
    pub fn compute(extractor: &dyn StimulusFeatures, conditions: &ConditionSet) -> Result<Self> {
        let n = conditions.n_items();
        let texts: Vec<&String> = Condition::ALL.iter().flat_map(|&c| conditions.get(c)).collect();
        let rows = par::try_map_range(texts.len(), |i| extractor.features(texts[i]))?;
        let width = rows.first().map_or(0, Vec::len);
        if width == 0 || rows.iter().any(|r| r.len() != width) {
            return Err(Error::dims("stimuli produced empty or ragged feature vectors"));
        }
        let block = |c: usize| RealMatrix::from_rows(&rows[c * n..(c + 1) * n]);
        Ok(Self {
            by_condition: [block(0)?, block(1)?, block(2)?, block(3)?],
        })
    }

    pub fn n_units(&self) -> usize {
        self.by_condition[0].cols()
    }

    /// First `k` feature columns (the top-k units when features follow a ranking).
    pub fn prefix(&self, k: usize) -> Result<Self> {
        if k == 0 || k > self.n_units() {
            return Err(Error::OutOfRange {
                index: k,
                limit: self.n_units(),
            });
        }
        let cols: Vec<usize> = (0..k).collect();
        Ok(Self {
            by_condition: self.by_condition.clone().map(|m| m.select_cols(&cols)),
        })
    }

    /// Each unit z-scored across the pooled stimuli of all four conditions.
    pub fn zscored(&self) -> Self {
        let n = self.by_condition[0].rows();
        let k = self.n_units();
        let mut out = self.by_condition.clone();
        let mut column = vec![0.0; 4 * n];
        for u in 0..k {
            for (c, m) in self.by_condition.iter().enumerate() {
                for i in 0..n {
                    column[c * n + i] = m.get(i, u);
                }
            }
            zscore_in_place(&mut column);
            for (c, m) in out.iter_mut().enumerate() {
                for i in 0..n {
                    m.set(i, u, column[c * n + i]);
                }
            }
        }
        Self { by_condition: out }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileResult {
    /// Indexed S, W, J, N.
    pub means: [f64; 4],
    /// Standard deviation over (encoder seed, stimulus) of the unit-mean response.
    pub sds: [f64; 4],
    pub per_seed: Vec<SeedProfile>,
    pub unit_source: String,
    pub tokenizer: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedProfile {
    pub seed: u64,
    pub means: [f64; 4],
    pub sds: [f64; 4],
}

impl ProfileResult {
    pub fn mean(&self, c: Condition) -> f64 {
        self.means[c as usize]
    }

    /// True when S is strictly highest and N strictly lowest.
    pub fn s_highest_n_lowest(means: &[f64; 4]) -> bool {
        let [s, w, j, n] = *means;
        s > w && s > j && s > n && n < w && n < j
    }

    /// Rows `condition,mean,sd,seed`; the pooled row uses seed `all`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("condition,mean,sd,seed\n");
        for p in &self.per_seed {
            for c in Condition::ALL {
                out += &format!("{},{:?},{:?},{}\n", c.label(), p.means[c as usize], p.sds[c as usize], p.seed);
            }
        }
        for c in Condition::ALL {
            out += &format!("{},{:?},{:?},all\n", c.label(), self.means[c as usize], self.sds[c as usize]);
        }
        out
    }
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
    } else {
        0.0
    };
    (m, var.sqrt())
}

/// Univariate response profile from per-seed features (one entry per encoder seed).
pub fn profile_from_features(
    per_seed: &[(u64, ConditionFeatures)],
    unit_source: &str,
    tokenizer: &str,
) -> Result<ProfileResult> {
    if per_seed.is_empty() {
        return Err(Error::precondition("profile needs at least one seed"));
    }
    let mut pooled: [Vec<f64>; 4] = Default::default();
    let mut seeds_out = Vec::with_capacity(per_seed.len());
    for (seed, feats) in per_seed {
        let z = feats.zscored();
        let mut means = [0.0; 4];
        let mut sds = [0.0; 4];
        for (c, m) in z.by_condition.iter().enumerate() {
            let item_means: Vec<f64> = (0..m.rows())
                .map(|i| m.row(i).iter().sum::<f64>() / m.cols() as f64)
                .collect();
            (means[c], sds[c]) = mean_sd(&item_means);
            pooled[c].extend(item_means);
        }
        seeds_out.push(SeedProfile {
            seed: *seed,
            means,
            sds,
        });
    }
    let mut means = [0.0; 4];
    let mut sds = [0.0; 4];
    for c in 0..4 {
        (means[c], sds[c]) = mean_sd(&pooled[c]);
    }
    Ok(ProfileResult {
        means,
        sds,
        per_seed: seeds_out,
        unit_source: unit_source.to_string(),
        tokenizer: tokenizer.to_string(),
    })
}

/// Computes features per extractor and the pooled univariate profile.
pub fn univariate_profile(
    extractors: &[(u64, &dyn StimulusFeatures)],
    conditions: &ConditionSet,
    unit_source: &str,
    tokenizer: &str,
) -> Result<ProfileResult> {
    let feats = extractors
        .iter()
        .map(|(seed, e)| Ok((*seed, ConditionFeatures::compute(*e, conditions)?)))
        .collect::<Result<Vec<_>>>()?;
    profile_from_features(&feats, unit_source, tokenizer)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatternResult {
    /// Mean within − between discrimination over (S,J) and (W,N).
    pub lexical: f64,
    /// Mean within − between discrimination over (S,W) and (J,N).
    pub syntactic: f64,
    pub splits: usize,
    pub seed: u64,
}

pub const DEFAULT_SPLITS: usize = 10;

fn half_pattern(m: &RealMatrix, items: &[usize]) -> Vec<f64> {
    let mut p = vec![0.0; m.cols()];
    for &i in items {
        for (acc, v) in p.iter_mut().zip(m.row(i)) {
            *acc += v;
        }
    }
    p.iter_mut().for_each(|v| *v /= items.len() as f64);
    p
}

fn zr(a: &[f64], b: &[f64]) -> Result<f64> {
    let r = pearson_r(a, b).map_err(|e| Error::degenerate(format!("pattern correlation: {e}")))?;
    fisher_z(r).map_err(|e| Error::degenerate(format!("pattern correlation: {e}")))
}

/// Split-half lexical vs syntactic pattern discrimination.
///
/// Patterns are raw unit-wise means. Items are split with the same random
/// halves in every condition.
pub fn pattern_from_features(feats: &ConditionFeatures, seed: u64, splits: usize) -> Result<PatternResult> {
    let n = feats.by_condition[0].rows();
    if n < 4 {
        return Err(Error::precondition(format!("need at least 2 items per half, got {n} items")));
    }
    if splits == 0 {
        return Err(Error::precondition("need at least one split"));
    }
    let mut rng = seeds::stream(seed, "analyses.split-half");
    let mut lexical = 0.0;
    let mut syntactic = 0.0;
    for _ in 0..splits {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng);
        let (h1, h2) = idx.split_at(n / 2);
        let halves: Vec<(Vec<f64>, Vec<f64>)> = feats
            .by_condition
            .iter()
            .map(|m| (half_pattern(m, h1), half_pattern(m, h2)))
            .collect();
        let disc = |a: Condition, b: Condition| -> Result<f64> {
            let (a1, a2) = &halves[a as usize];
            let (b1, b2) = &halves[b as usize];
            let within = (zr(a1, a2)? + zr(b1, b2)?) / 2.0;
            let between = (zr(a1, b2)? + zr(a2, b1)?) / 2.0;
            Ok(within - between)
        };
        use Condition::*;
        lexical += (disc(S, J)? + disc(W, N)?) / 2.0;
        syntactic += (disc(S, W)? + disc(J, N)?) / 2.0;
    }
    Ok(PatternResult {
        lexical: lexical / splits as f64,
        syntactic: syntactic / splits as f64,
        splits,
        seed,
    })
}

pub fn multivariate_pattern(
    extractor: &dyn StimulusFeatures,
    conditions: &ConditionSet,
    seed: u64,
) -> Result<PatternResult> {
    pattern_from_features(&ConditionFeatures::compute(extractor, conditions)?, seed, DEFAULT_SPLITS)
}

/// Reruns an analysis on each top-k prefix of features computed once in ranking order.
pub fn k_sweep<T>(
    features: &ConditionFeatures,
    ks: &[usize],
    analysis: impl Fn(&ConditionFeatures) -> Result<T>,
) -> Result<Vec<(usize, T)>> {
    ks.iter()
        .map(|&k| Ok((k, analysis(&features.prefix(k)?)?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn construction_invariants() {
        let c = generate_conditions(3, 12, 8).unwrap();
        let lex = text::lexicon();
        for i in 0..12 {
            let mut s = text::words(&c.s[i]);
            let mut w = text::words(&c.w[i]);
            s.sort_unstable();
            w.sort_unstable();
            assert_eq!(s, w);

            let s = text::words(&c.s[i]);
            let j = text::words(&c.j[i]);
            assert_eq!(s.len(), j.len());
            for (a, b) in s.iter().zip(&j) {
                if text::is_function_word(a) {
                    assert_eq!(a, b);
                } else {
                    assert!(!lex.contains(b), "{b} is a real word");
                }
            }
            let mut j = j.clone();
            let mut n = text::words(&c.n[i]);
            j.sort_unstable();
            n.sort_unstable();
            assert_eq!(j, n);
        }
    }

    #[test]
    fn preconditions() {
        assert!(generate_conditions(0, 7, 8).is_err());
        assert!(generate_conditions(0, 8, 2).is_err());
    }

    #[test]
    fn exclusion_is_respected() {
        let first = generate_conditions(4, 8, 6).unwrap();
        let exclude: HashSet<String> = first.s.iter().cloned().collect();
        let c = generate_conditions_excluding(4, 8, 6, &exclude).unwrap();
        assert!(c.s.iter().all(|s| !exclude.contains(s)));
    }

    struct Constant;
    impl StimulusFeatures for Constant {
        fn features(&self, _: &str) -> Result<Vec<f64>> {
            Ok(vec![3.0; 5])
        }
    }

    #[test]
    fn constant_features_profile_is_flat() {
        let c = generate_conditions(1, 8, 6).unwrap();
        let p = univariate_profile(&[(0, &Constant)], &c, "localized", "bpe").unwrap();
        assert_eq!(p.means, [0.0; 4]);
    }

    #[test]
    fn zscore_grand_mean_is_zero() {
        let feats = ConditionFeatures {
            by_condition: std::array::from_fn(|c| RealMatrix::from_fn(6, 3, |i, u| (c * 7 + i * i + u) as f64)),
        };
        let p = profile_from_features(&[(0, feats)], "random", "bpe").unwrap();
        assert!(p.means.iter().sum::<f64>().abs() < 1e-10);
    }

    #[test]
    fn identical_conditions_do_not_discriminate() {
        let base = RealMatrix::from_fn(10, 12, |i, u| ((i * 31 + u * 17) % 11) as f64 + (u as f64).sin());
        let feats = ConditionFeatures {
            by_condition: std::array::from_fn(|_| base.clone()),
        };
        let r = pattern_from_features(&feats, 5, 10).unwrap();
        assert!(r.lexical.abs() < 1e-12 && r.syntactic.abs() < 1e-12);
    }

    #[test]
    fn prefix_bounds() {
        let feats = ConditionFeatures {
            by_condition: std::array::from_fn(|_| RealMatrix::zeros(4, 3)),
        };
        assert_eq!(feats.prefix(3).unwrap(), feats);
        assert!(feats.prefix(4).is_err());
        let out = k_sweep(&feats, &[1, 2], |f| Ok(f.n_units())).unwrap();
        assert_eq!(out, vec![(1, 1), (2, 2)]);
    }
}
