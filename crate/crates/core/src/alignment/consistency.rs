use rand::seq::SliceRandom;

use super::dataset::StimulusResponseDataset;
use super::predictivity::{cka_benchmark, linear_predictivity, rdm_benchmark, Metric, PredictivityOptions};
use crate::{par, seeds, Error, RealMatrix, Result};

const EXHAUSTIVE_LIMIT: usize = 12;
const RANDOM_BIPARTITIONS: usize = 100;

/// Score of `features` against `responses` under `metric`.
pub fn metric_score(features: &RealMatrix, responses: &RealMatrix, metric: Metric, opts: &PredictivityOptions) -> Result<f64> {
    match metric {
        Metric::Linear => Ok(linear_predictivity(features, responses, opts)?.score),
        Metric::Cka => cka_benchmark(features, responses),
        Metric::Rdm => rdm_benchmark(features, responses),
    }
}

fn require_subjects(dataset: &StimulusResponseDataset) -> Result<Vec<String>> {
    let subjects = dataset.subjects();
    if subjects.len() < 2 {
        return Err(Error::precondition(format!(
            "consistency needs at least 2 subjects, dataset {:?} has {}",
            dataset.name,
            subjects.len()
        )));
    }
    Ok(subjects)
}

fn pooled(dataset: &StimulusResponseDataset, subjects: &[&str]) -> RealMatrix {
    let cols: Vec<usize> = subjects.iter().flat_map(|s| dataset.subject_channels(s)).collect();
    dataset.responses.select_cols(&cols)
}

/// Mean over subjects of the predictivity of that subject from all others pooled.
pub fn consistency_linear(dataset: &StimulusResponseDataset, opts: &PredictivityOptions) -> Result<f64> {
    let subjects = require_subjects(dataset)?;
    let scores = par::try_map_range(subjects.len(), |i| {
        let others: Vec<&str> = subjects
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, s)| s.as_str())
            .collect();
        let x = pooled(dataset, &others);
        let y = pooled(dataset, &[subjects[i].as_str()]);
        Ok::<_, Error>(linear_predictivity(&x, &y, opts)?.score)
    })?;
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

/// Balanced bipartitions of `0..n` as the index set of the first half.
///
/// For even `n` each unordered split appears once (subject 0 is pinned to
/// the first half). Above 12 subjects, 100 seeded random splits are drawn.
pub fn balanced_bipartitions(n: usize, seed: u64) -> Vec<Vec<usize>> {
    let half = n / 2;
    if n < 2 {
        return Vec::new();
    }
    if n > EXHAUSTIVE_LIMIT {
        let mut rng = seeds::stream(seed, "alignment.bipartition");
        return (0..RANDOM_BIPARTITIONS)
            .map(|_| {
                let mut idx: Vec<usize> = (0..n).collect();
                idx.shuffle(&mut rng);
                let mut first = idx[..half].to_vec();
                first.sort_unstable();
                first
            })
            .collect();
    }
    let mut out = Vec::new();
    for bits in 0u32..(1 << n) {
        if bits.count_ones() as usize != half {
            continue;
        }
        if n % 2 == 0 && bits & 1 == 0 {
            continue;
        }
        out.push((0..n).filter(|i| bits >> i & 1 == 1).collect());
    }
    out
}

/// Mean metric score between the pooled channels of the two halves of every
/// balanced subject bipartition.
pub fn consistency_splithalf(
    dataset: &StimulusResponseDataset,
    metric: Metric,
    opts: &PredictivityOptions,
    seed: u64,
) -> Result<f64> {
    let subjects = require_subjects(dataset)?;
    let splits = balanced_bipartitions(subjects.len(), seed);
    let scores = par::try_map_range(splits.len(), |k| {
        let a: Vec<&str> = splits[k].iter().map(|&i| subjects[i].as_str()).collect();
        let b: Vec<&str> = (0..subjects.len())
            .filter(|i| !splits[k].contains(i))
            .map(|i| subjects[i].as_str())
            .collect();
        metric_score(&pooled(dataset, &a), &pooled(dataset, &b), metric, opts)
    })?;
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}
