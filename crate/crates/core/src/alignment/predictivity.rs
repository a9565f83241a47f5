use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::numerics::{linear_cka, pearson_r, rdm_similarity, RidgeOptions, RidgeProblem};
use crate::{par, seeds, Error, RealMatrix, Result};

/// Similarity metric between model features and responses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Linear,
    Cka,
    Rdm,
}

impl Metric {
    pub fn label(self) -> &'static str {
        match self {
            Metric::Linear => "linear",
            Metric::Cka => "cka",
            Metric::Rdm => "rdm",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Ok(Metric::Linear),
            "cka" => Ok(Metric::Cka),
            "rdm" => Ok(Metric::Rdm),
            _ => Err(Error::parse(format!("unknown metric {s:?}"))),
        }
    }
}

/// One penalty per decade from 1e-3 to 1e5.
pub fn default_lambda_grid() -> Vec<f64> {
    (-3..=5).map(|e| 10f64.powi(e)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictivityOptions {
    pub folds: usize,
    pub inner_folds: usize,
    pub lambdas: Vec<f64>,
    /// Shuffle stimuli before the contiguous split; `None` keeps presentation order.
    pub shuffle_seed: Option<u64>,
}

impl Default for PredictivityOptions {
    fn default() -> Self {
        Self {
            folds: 10,
            inner_folds: 5,
            lambdas: default_lambda_grid(),
            shuffle_seed: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldScore {
    pub fold: usize,
    /// Mean Pearson r over scored channels; `None` when every channel was skipped.
    pub score: Option<f64>,
    pub lambda: f64,
    pub channels_scored: usize,
    pub channels_skipped: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictivityResult {
    pub score: f64,
    pub per_fold: Vec<FoldScore>,
    pub lambdas: Vec<f64>,
    pub skipped_channels: usize,
}

/// Contiguous `[start, end)` blocks; sizes differ by at most one.
pub fn fold_ranges(n: usize, folds: usize) -> Vec<(usize, usize)> {
    (0..folds).map(|f| (f * n / folds, (f + 1) * n / folds)).collect()
}

fn complement(n: usize, (start, end): (usize, usize)) -> Vec<usize> {
    (0..start).chain(end..n).collect()
}

/// Per-channel Pearson r, skipping channels whose observed or predicted values are constant.
fn channel_scores(pred: &RealMatrix, obs: &RealMatrix) -> (Vec<f64>, usize) {
    let mut scores = Vec::with_capacity(obs.cols());
    let mut skipped = 0;
    for c in 0..obs.cols() {
        match pearson_r(&pred.col(c), &obs.col(c)) {
            Ok(r) => scores.push(r),
            Err(_) => skipped += 1,
        }
    }
    (scores, skipped)
}

fn mean_or_none(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

fn select_lambda(x: &RealMatrix, y: &RealMatrix, opts: &PredictivityOptions) -> Result<f64> {
    let n = x.rows();
    // each inner validation block needs three rows for a correlation
    let inner = opts.inner_folds.min(n / 3);
    let fallback = opts.lambdas[opts.lambdas.len() / 2];
    if inner < 2 {
        return Ok(fallback);
    }
    let mut totals = vec![0.0; opts.lambdas.len()];
    let mut counts = vec![0usize; opts.lambdas.len()];
    for block in fold_ranges(n, inner) {
        let train = complement(n, block);
        let val: Vec<usize> = (block.0..block.1).collect();
        let problem = RidgeProblem::new(&x.select_rows(&train), &y.select_rows(&train), RidgeOptions::default())?;
        let xv = x.select_rows(&val);
        let yv = y.select_rows(&val);
        for (li, &lambda) in opts.lambdas.iter().enumerate() {
            let Ok(fit) = problem.solve(lambda) else { continue };
            let (scores, _) = channel_scores(&fit.predict(&xv)?, &yv);
            if let Some(m) = mean_or_none(&scores) {
                totals[li] += m;
                counts[li] += 1;
            }
        }
    }
    let mut best: Option<(usize, f64)> = None;
    for li in 0..opts.lambdas.len() {
        if counts[li] == 0 {
            continue;
        }
        let m = totals[li] / counts[li] as f64;
        if best.is_none_or(|(_, b)| m > b) {
            best = Some((li, m));
        }
    }
    Ok(best.map_or(fallback, |(li, _)| opts.lambdas[li]))
}

/// Cross-validated ridge predictivity: mean over folds of the mean per-channel
/// Pearson r between held-out predictions and responses.
pub fn linear_predictivity(
    features: &RealMatrix,
    responses: &RealMatrix,
    opts: &PredictivityOptions,
) -> Result<PredictivityResult> {
    let n = features.rows();
    if responses.rows() != n {
        return Err(Error::dims(format!("{n} feature rows but {} response rows", responses.rows())));
    }
    if features.cols() == 0 || responses.cols() == 0 {
        return Err(Error::precondition("predictivity needs at least one feature and one channel"));
    }
    if opts.folds < 2 {
        return Err(Error::precondition("predictivity needs at least 2 folds"));
    }
    if n < opts.folds {
        return Err(Error::precondition(format!("{n} stimuli cannot fill {} folds", opts.folds)));
    }
    if opts.lambdas.is_empty() || opts.lambdas.iter().any(|l| !l.is_finite() || *l <= 0.0) {
        return Err(Error::precondition("penalty grid must be non-empty and positive"));
    }
    let order: Vec<usize> = match opts.shuffle_seed {
        Some(seed) => {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut seeds::stream(seed, "alignment.fold-shuffle"));
            idx
        }
        None => (0..n).collect(),
    };
    let x = features.select_rows(&order);
    let y = responses.select_rows(&order);

    let ranges = fold_ranges(n, opts.folds);
    let per_fold = par::try_map_range(opts.folds, |f| -> Result<FoldScore> {
        let train = complement(n, ranges[f]);
        let test: Vec<usize> = (ranges[f].0..ranges[f].1).collect();
        let xt = x.select_rows(&train);
        let yt = y.select_rows(&train);
        let lambda = select_lambda(&xt, &yt, opts)?;
        let fit = RidgeProblem::new(&xt, &yt, RidgeOptions::default())?.solve(lambda)?;
        let (scores, skipped) = channel_scores(&fit.predict(&x.select_rows(&test))?, &y.select_rows(&test));
        Ok(FoldScore {
            fold: f,
            score: mean_or_none(&scores),
            lambda,
            channels_scored: scores.len(),
            channels_skipped: skipped,
        })
    })?;
    let fold_means: Vec<f64> = per_fold.iter().filter_map(|f| f.score).collect();
    let score = mean_or_none(&fold_means)
        .ok_or_else(|| Error::degenerate("every channel was constant in every test fold"))?;
    Ok(PredictivityResult {
        score,
        skipped_channels: per_fold.iter().map(|f| f.channels_skipped).sum(),
        per_fold,
        lambdas: opts.lambdas.clone(),
    })
}

pub fn cka_benchmark(features: &RealMatrix, responses: &RealMatrix) -> Result<f64> {
    linear_cka(features, responses)
}

pub fn rdm_benchmark(features: &RealMatrix, responses: &RealMatrix) -> Result<f64> {
    rdm_similarity(features, responses)
}
