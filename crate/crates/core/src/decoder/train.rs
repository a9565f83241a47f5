use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::model::{Decoder, FeatureSource};
use super::params::ParamStore;
use crate::tokenizer::Tokenizer;
use crate::{par, seeds, Error, RealMatrix, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Windows per optimizer step (gradients are accumulated over them).
    pub batch_size: usize,
    pub peak_lr: f64,
    pub warmup_steps: usize,
    pub eval_interval: usize,
    /// Caps the total step count (the schedule decays to 0 at the cap).
    pub max_steps: Option<usize>,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    /// Desk-scale defaults: batch 16, 5 epochs, peak 5e-3 after 500 warmup steps.
    fn default() -> Self {
        Self {
            epochs: 5,
            batch_size: 16,
            peak_lr: 5e-3,
            warmup_steps: 500,
            eval_interval: 1000,
            max_steps: None,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.peak_lr > 0.0) || !self.peak_lr.is_finite() {
            return Err(Error::precondition("peak learning rate must be positive"));
        }
        if self.batch_size == 0 || self.epochs == 0 || self.eval_interval == 0 {
            return Err(Error::precondition("batch size, epochs and eval interval must be positive"));
        }
        Ok(())
    }
}

/// Linear warmup from 0 to `peak`, then linear decay to 0 at `total` steps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LrSchedule {
    pub peak: f64,
    pub warmup: usize,
    pub total: usize,
}

impl LrSchedule {
    pub fn lr(&self, step: usize) -> f64 {
        if step >= self.total {
            return 0.0;
        }
        if step < self.warmup {
            return self.peak * step as f64 / self.warmup as f64;
        }
        self.peak * (self.total - step) as f64 / (self.total - self.warmup) as f64
    }
}

/// Concatenated token ids of `docs`, each prefixed by a space so every
/// document starts on a word boundary.
pub fn token_stream(tokenizer: &Tokenizer, docs: &[String]) -> Vec<u32> {
    docs.iter().flat_map(|d| tokenizer.encode(&format!(" {d}")).ids).collect()
}

/// Non-overlapping windows: inputs `stream[s..s+T]`, targets shifted by one.
pub fn windows(stream: &[u32], context: usize) -> Vec<(Vec<u32>, Vec<u32>)> {
    let mut out = Vec::new();
    let mut s = 0;
    while s + 1 < stream.len() {
        let end = (s + context + 1).min(stream.len());
        out.push((stream[s..end - 1].to_vec(), stream[s + 1..end].to_vec()));
        s += context;
    }
    out
}

/// Windows with their frozen-encoder features precomputed.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedSplit {
    pub features: Vec<RealMatrix>,
    pub inputs: Vec<Vec<u32>>,
    pub targets: Vec<Vec<u32>>,
}

impl PreparedSplit {
    pub fn new(source: &FeatureSource, stream: &[u32], context: usize) -> Result<Self> {
        let w = windows(stream, context);
        if w.is_empty() {
            return Err(Error::precondition("token stream too short for a single window"));
        }
        let features = par::try_map_range(w.len(), |i| source.features(&w[i].0))?;
        let (inputs, targets) = w.into_iter().unzip();
        Ok(Self {
            features,
            inputs,
            targets,
        })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn n_tokens(&self) -> usize {
        self.targets.iter().map(Vec::len).sum()
    }
}

/// Token-weighted mean next-token loss over a split.
pub fn evaluate(decoder: &Decoder, split: &PreparedSplit) -> Result<f64> {
    let losses = par::try_map_range(split.len(), |i| decoder.loss(&split.features[i], &split.targets[i]))?;
    let total: f64 = losses.iter().zip(&split.targets).map(|(l, t)| l * t.len() as f64).sum();
    Ok(total / split.n_tokens() as f64)
}

pub fn perplexity(decoder: &Decoder, split: &PreparedSplit) -> Result<f64> {
    Ok(evaluate(decoder, split)?.exp())
}

/// Add-one smoothed unigram distribution over the vocabulary.
#[derive(Clone, Debug, PartialEq)]
pub struct UnigramModel {
    log_probs: Vec<f64>,
}

impl UnigramModel {
    pub fn fit(tokens: &[u32], vocab_size: usize) -> Result<Self> {
        let mut counts = vec![1.0; vocab_size];
        for &t in tokens {
            *counts
                .get_mut(t as usize)
                .ok_or(Error::OutOfRange { index: t as usize, limit: vocab_size })? += 1.0;
        }
        let total: f64 = counts.iter().sum();
        Ok(Self {
            log_probs: counts.iter().map(|c| (c / total).ln()).collect(),
        })
    }

    pub fn perplexity(&self, targets: &[u32]) -> Result<f64> {
        if targets.is_empty() {
            return Err(Error::precondition("empty target stream"));
        }
        let mut nll = 0.0;
        for &t in targets {
            nll -= self
                .log_probs
                .get(t as usize)
                .ok_or(Error::OutOfRange { index: t as usize, limit: self.log_probs.len() })?;
        }
        Ok((nll / targets.len() as f64).exp())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: usize,
    pub split: String,
    pub loss: f64,
    pub lr: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub curve: Vec<LossRecord>,
    pub total_steps: usize,
    pub best_step: usize,
    pub best_valid_loss: f64,
    /// Parameters at the lowest validation loss (also loaded into the decoder).
    pub best_params: ParamStore,
}

impl TrainOutcome {
    pub fn curve_csv(&self) -> String {
        let mut out = String::from("step,split,loss,lr\n");
        for r in &self.curve {
            out += &format!("{},{},{:?},{:?}\n", r.step, r.split, r.loss, r.lr);
        }
        out
    }

    pub fn train_losses(&self) -> Vec<f64> {
        self.curve.iter().filter(|r| r.split == "train").map(|r| r.loss).collect()
    }
}

struct Adam {
    m: Vec<RealMatrix>,
    v: Vec<RealMatrix>,
    t: i32,
}

impl Adam {
    fn new(params: &ParamStore) -> Self {
        let zeros = |p: usize| RealMatrix::zeros(params.get(p).rows(), params.get(p).cols());
        Self {
            m: (0..params.len()).map(zeros).collect(),
            v: (0..params.len()).map(zeros).collect(),
            t: 0,
        }
    }

    fn step(&mut self, params: &mut ParamStore, grads: &[RealMatrix], lr: f64, cfg: &TrainConfig) {
        self.t += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.t);
        let c2 = 1.0 - cfg.beta2.powi(self.t);
        for (p, g) in grads.iter().enumerate() {
            let (m, v) = (self.m[p].data_mut(), self.v[p].data_mut());
            let w = params.get_mut(p).data_mut();
            for i in 0..w.len() {
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g.data()[i];
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g.data()[i] * g.data()[i];
                w[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + cfg.adam_eps);
            }
        }
    }
}

/// Adam with warmup/linear-decay schedule and gradient accumulation over
/// `batch_size` windows; keeps the lowest-validation-loss parameters.
pub fn train(
    decoder: &mut Decoder,
    train_split: &PreparedSplit,
    valid_split: &PreparedSplit,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_split.is_empty() || valid_split.is_empty() {
        return Err(Error::precondition("training needs non-empty train and validation splits"));
    }
    let per_epoch = train_split.len().div_ceil(cfg.batch_size);
    let total = cfg.max_steps.unwrap_or(per_epoch * cfg.epochs).min(per_epoch * cfg.epochs);
    let schedule = LrSchedule {
        peak: cfg.peak_lr,
        warmup: cfg.warmup_steps.min(total),
        total,
    };
    let mut rng = seeds::stream(cfg.seed, "decoder.batches");
    let mut adam = Adam::new(decoder.params());
    let mut curve = Vec::new();

    let initial = evaluate(decoder, valid_split)?;
    curve.push(LossRecord {
        step: 0,
        split: "valid".into(),
        loss: initial,
        lr: schedule.lr(0),
    });
    let mut best = (0, initial, decoder.params().clone());

    let mut order: Vec<usize> = Vec::new();
    let mut cursor = 0;
    for step in 0..total {
        if cursor == order.len() {
            order = (0..train_split.len()).collect();
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let batch: Vec<usize> = order[cursor..(cursor + cfg.batch_size).min(order.len())].to_vec();
        cursor += batch.len();

        let results = par::try_map_slice(&batch, |&w| {
            decoder.loss_and_grads(&train_split.features[w], &train_split.targets[w])
        })?;
        let n_tok: usize = batch.iter().map(|&w| train_split.targets[w].len()).sum();
        let mut loss = 0.0;
        let mut grads: Vec<RealMatrix> = (0..decoder.params().len())
            .map(|p| RealMatrix::zeros(decoder.params().get(p).rows(), decoder.params().get(p).cols()))
            .collect();
        for ((l, g), &w) in results.into_iter().zip(&batch) {
            let weight = train_split.targets[w].len() as f64 / n_tok as f64;
            loss += l * weight;
            for (p, acc) in grads.iter_mut().enumerate() {
                for (a, v) in acc.data_mut().iter_mut().zip(g.get(p)?.data()) {
                    *a += weight * v;
                }
            }
        }
        let lr = schedule.lr(step);
        if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("training loss at step {step} (lr {lr}, loss {loss})")));
        }
        curve.push(LossRecord {
            step,
            split: "train".into(),
            loss,
            lr,
        });
        adam.step(decoder.params_mut(), &grads, lr, cfg);

        let done = step + 1;
        if done % cfg.eval_interval == 0 || done == total {
            let v = evaluate(decoder, valid_split)?;
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("validation loss at step {done}")));
            }
            curve.push(LossRecord {
                step: done,
                split: "valid".into(),
                loss: v,
                lr: schedule.lr(done),
            });
            if v < best.1 {
                best = (done, v, decoder.params().clone());
            }
        }
    }
    decoder.set_params(best.2.clone())?;
    Ok(TrainOutcome {
        curve,
        total_steps: total,
        best_step: best.0,
        best_valid_loss: best.1,
        best_params: best.2,
    })
}
