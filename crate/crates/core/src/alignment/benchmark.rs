use std::collections::BTreeMap;
use std::ops::Range;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::consistency::{consistency_linear, consistency_splithalf, metric_score};
use super::control::{apply_control, ControlCondition};
use super::dataset::StimulusResponseDataset;
use super::predictivity::{linear_predictivity, FoldScore, Metric, PredictivityOptions};
use crate::encoder::{Aggregation, Encoder};
use crate::error::StageExt;
use crate::localizer::{extract_span, UnitMask};
use crate::tokenizer::Tokenizer;
use crate::{par, Error, RealMatrix, Result};

/// Encoder, tokenizer and optional unit mask that turn stimuli into features.
#[derive(Clone, Copy, Debug)]
pub struct FeatureModel<'a> {
    pub encoder: &'a Encoder,
    pub tokenizer: &'a Tokenizer,
    /// `None` uses every unit.
    pub mask: Option<&'a UnitMask>,
    /// Reduction over the stimulus span; `LastToken` reads the stimulus-final position.
    pub aggregation: Aggregation,
}

/// Token ids of a stimulus preceded by its context, and the stimulus's own span.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContextualizedStimulus {
    pub ids: Vec<u32>,
    pub span: Range<usize>,
}

/// Tokenizes every stimulus with up to `context_window` preceding stimuli of
/// the same group prepended, separated by single spaces.
pub fn contextualize(dataset: &StimulusResponseDataset, tokenizer: &Tokenizer) -> Result<Vec<ContextualizedStimulus>> {
    let stimuli = &dataset.stimuli;
    par::try_map_range(stimuli.len(), |i| {
        let mut start = i;
        while start > 0 && i - start < dataset.context_window && stimuli[start - 1].group == stimuli[i].group {
            start -= 1;
        }
        let mut ids = Vec::new();
        if start < i {
            let prefix: Vec<&str> = stimuli[start..i].iter().map(|s| s.text.as_str()).collect();
            ids = tokenizer.encode(&prefix.join(" ")).ids;
        }
        let own = if ids.is_empty() {
            tokenizer.encode(&stimuli[i].text)
        } else {
            tokenizer.encode(&format!(" {}", stimuli[i].text))
        };
        if own.is_empty() {
            return Err(Error::precondition(format!("stimulus {i} tokenizes to nothing")));
        }
        let span = ids.len()..ids.len() + own.len();
        ids.extend(own.ids);
        Ok(ContextualizedStimulus { ids, span })
    })
}

/// Stimuli × features matrix under a control condition.
pub fn stimulus_features(
    model: &FeatureModel<'_>,
    contexts: &[ContextualizedStimulus],
    control: ControlCondition,
    seed: u64,
) -> Result<RealMatrix> {
    let rows = par::try_map_range(contexts.len(), |i| {
        let c = &contexts[i];
        let ids = apply_control(&c.ids, control, seed, i as u64, model.tokenizer);
        let record = model.encoder.forward_ids(&ids)?;
        match model.mask {
            Some(mask) => extract_span(&record, mask, model.aggregation, c.span.clone()),
            None => record.aggregate_units(model.aggregation, c.span.clone()),
        }
    })?;
    let width = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != width) {
        return Err(Error::dims("stimuli produced feature vectors of different widths"));
    }
    RealMatrix::from_rows(&rows)
}

/// Sentence-length and sentence-position features.
#[derive(Clone, Debug, PartialEq)]
pub struct BaselineFeatures {
    /// Column 0 = token count, column 1 = declared position in group.
    pub matrix: RealMatrix,
    pub zero_variance: [bool; 2],
}

impl BaselineFeatures {
    /// Columns with non-zero variance; `None` when both are constant.
    pub fn informative(&self) -> Option<RealMatrix> {
        let keep: Vec<usize> = (0..2).filter(|&c| !self.zero_variance[c]).collect();
        (!keep.is_empty()).then(|| self.matrix.select_cols(&keep))
    }
}

pub fn baseline_features(dataset: &StimulusResponseDataset, tokenizer: &Tokenizer) -> BaselineFeatures {
    let rows: Vec<[f64; 2]> = dataset
        .stimuli
        .iter()
        .map(|s| [tokenizer.encode(&s.text).len() as f64, s.position as f64])
        .collect();
    let matrix = RealMatrix::from_rows(&rows).unwrap_or_else(|_| RealMatrix::zeros(0, 2));
    let constant = |c: usize| rows.iter().all(|r| r[c] == rows.first().map_or(0.0, |f| f[c]));
    BaselineFeatures {
        matrix,
        zero_variance: [constant(0), constant(1)],
    }
}

/// `max(0, raw) / consistency`.
pub fn normalize_score(raw: f64, consistency: f64) -> Result<f64> {
    if !(consistency > 0.0) || !consistency.is_finite() {
        return Err(Error::precondition(format!("consistency must be positive, got {consistency}")));
    }
    if !raw.is_finite() {
        return Err(Error::NonFinite("raw score".into()));
    }
    Ok(raw.max(0.0) / consistency)
}

/// Arithmetic mean of normalized scores.
pub fn aggregate_scores(normalized: &[f64]) -> Result<f64> {
    if normalized.is_empty() {
        return Err(Error::precondition("nothing to aggregate"));
    }
    Ok(normalized.iter().sum::<f64>() / normalized.len() as f64)
}

/// Memoized consistency ceilings keyed by (dataset hash, metric).
#[derive(Debug, Default)]
pub struct ConsistencyCache {
    values: Mutex<BTreeMap<(String, Metric), f64>>,
}

impl ConsistencyCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(
        &self,
        dataset: &StimulusResponseDataset,
        metric: Metric,
        opts: &PredictivityOptions,
        seed: u64,
    ) -> Result<f64> {
        let key = (dataset.content_hash(), metric);
        if let Some(v) = self.values.lock().expect("cache lock").get(&key) {
            return Ok(*v);
        }
        let v = match metric {
            Metric::Linear => consistency_linear(dataset, opts)?,
            _ => consistency_splithalf(dataset, metric, opts, seed)?,
        };
        self.values.lock().expect("cache lock").insert(key, v);
        Ok(v)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkResult {
    pub dataset: String,
    pub metric: Metric,
    pub control: ControlCondition,
    pub raw: f64,
    pub consistency: f64,
    pub normalized: f64,
    /// Empty for the non-parametric metrics.
    pub per_fold: Vec<FoldScore>,
    pub lambdas: Vec<f64>,
    pub skipped_channels: usize,
    pub n_stimuli: usize,
    pub n_features: usize,
    pub seed: u64,
}

impl BenchmarkResult {
    pub const CSV_HEADER: &'static str =
        "dataset,metric,control,raw,consistency,normalized,skipped_channels,n_stimuli,n_features,seed";

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{:?},{:?},{:?},{},{},{},{}",
            self.dataset,
            self.metric.label(),
            self.control.label(),
            self.raw,
            self.consistency,
            self.normalized,
            self.skipped_channels,
            self.n_stimuli,
            self.n_features,
            self.seed
        )
    }
}

/// Scores a precomputed feature matrix against a dataset and normalizes it.
pub fn score_features(
    features: &RealMatrix,
    dataset: &StimulusResponseDataset,
    metric: Metric,
    control: ControlCondition,
    opts: &PredictivityOptions,
    seed: u64,
    cache: &ConsistencyCache,
) -> Result<BenchmarkResult> {
    let (raw, per_fold, skipped) = match metric {
        Metric::Linear => {
            let r = linear_predictivity(features, &dataset.responses, opts).stage("metric")?;
            (r.score, r.per_fold, r.skipped_channels)
        }
        _ => (metric_score(features, &dataset.responses, metric, opts).stage("metric")?, Vec::new(), 0),
    };
    let consistency = cache.get(dataset, metric, opts, seed).stage("consistency")?;
    let normalized = normalize_score(raw, consistency).stage("normalize")?;
    Ok(BenchmarkResult {
        dataset: dataset.name.clone(),
        metric,
        control,
        raw,
        consistency,
        normalized,
        per_fold,
        lambdas: if metric == Metric::Linear { opts.lambdas.clone() } else { Vec::new() },
        skipped_channels: skipped,
        n_stimuli: dataset.n_stimuli(),
        n_features: features.cols(),
        seed,
    })
}

/// Tokenize with context → forward → masked features → metric → consistency → normalize.
pub fn run_benchmark(
    model: &FeatureModel<'_>,
    dataset: &StimulusResponseDataset,
    metric: Metric,
    control: ControlCondition,
    opts: &PredictivityOptions,
    seed: u64,
    cache: &ConsistencyCache,
) -> Result<BenchmarkResult> {
    dataset.validate().stage("dataset")?;
    let contexts = contextualize(dataset, model.tokenizer).stage("tokenize")?;
    let features = stimulus_features(model, &contexts, control, seed).stage("forward")?;
    score_features(&features, dataset, metric, control, opts, seed, cache)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alignment::Stimulus;
    use crate::tokenizer::WordTokenizer;

    #[test]
    fn normalization_table() {
        assert_eq!(normalize_score(0.2, 0.4).unwrap(), 0.5);
        assert_eq!(normalize_score(-0.1, 0.4).unwrap(), 0.0);
        assert_eq!(normalize_score(0.4, 0.2).unwrap(), 2.0);
        assert!(normalize_score(0.4, 0.0).is_err());
        assert!(normalize_score(0.4, -0.3).is_err());
        assert_eq!(aggregate_scores(&[0.4, 0.6]).unwrap(), 0.5);
    }

    fn dataset(texts: &[(&str, u32, u32)], window: usize) -> StimulusResponseDataset {
        let stimuli: Vec<Stimulus> = texts
            .iter()
            .map(|(t, g, p)| Stimulus {
                text: t.to_string(),
                group: *g,
                position: *p,
            })
            .collect();
        let n = stimuli.len();
        StimulusResponseDataset::new("t", stimuli, RealMatrix::zeros(n, 2), vec!["a".into(), "b".into()], window)
            .unwrap()
    }

    #[test]
    fn context_stays_within_group() {
        let tok = Tokenizer::Word(WordTokenizer);
        let d = dataset(&[("a b", 0, 1), ("c", 0, 2), ("d e f", 0, 3), ("g", 1, 1)], 1);
        let c = contextualize(&d, &tok).unwrap();
        assert_eq!(c[0].span, 0..2);
        assert_eq!(c[1].span, 2..3);
        // window of one: only "c" precedes "d e f"
        assert_eq!(c[2].ids.len(), 4);
        assert_eq!(c[2].span, 1..4);
        assert_eq!(c[3].span, 0..1);
    }

    #[test]
    fn baseline_length_and_position() {
        let tok = Tokenizer::Word(WordTokenizer);
        let d = dataset(&[("one two", 0, 1), ("one two three four five six", 0, 3)], 0);
        let b = baseline_features(&d, &tok);
        assert_eq!(b.matrix.row(1), &[6.0, 3.0]);
        assert_eq!(b.zero_variance, [false, false]);

        let d = dataset(&[("x y", 0, 1), ("z w", 1, 1)], 0);
        let b = baseline_features(&d, &tok);
        assert_eq!(b.zero_variance, [true, true]);
        assert!(b.informative().is_none());
    }
}
