use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use super::tape::{Gradients, Tape, Var};
use crate::encoder::Encoder;
use crate::localizer::{extract_positions, UnitMask};
use crate::{seeds, Error, RealMatrix, Result};

/// What the decoder reads at each position.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum InputSource {
    /// Frozen token embeddings; the encoder blocks are bypassed.
    Embeddings,
    /// Residual stream after the encoder's last pass.
    FinalLayer,
    /// Per-position activations of the localized units.
    LocalizedUnits,
}

impl InputSource {
    pub fn label(self) -> &'static str {
        match self {
            Self::Embeddings => "EMBEDDINGS",
            Self::FinalLayer => "FINAL_LAYER",
            Self::LocalizedUnits => "LOCALIZED_UNITS",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().replace('-', "_").as_str() {
            "EMBEDDINGS" => Ok(Self::Embeddings),
            "FINAL_LAYER" => Ok(Self::FinalLayer),
            "LOCALIZED_UNITS" => Ok(Self::LocalizedUnits),
            _ => Err(Error::parse(format!("unknown input source {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecoderConfig {
    pub n_blocks: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub mlp_hidden: usize,
    pub vocab_size: usize,
    pub input: InputSource,
    pub context_length: usize,
    pub seed: u64,
}

impl DecoderConfig {
    pub fn new(vocab_size: usize, d_model: usize, n_heads: usize, input: InputSource, seed: u64) -> Self {
        Self {
            n_blocks: 1,
            d_model,
            n_heads,
            mlp_hidden: 4 * d_model,
            vocab_size,
            input,
            context_length: 128,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.n_blocks) {
            return Err(Error::precondition(format!("decoder supports 1 or 2 blocks, got {}", self.n_blocks)));
        }
        if self.d_model == 0 || self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return Err(Error::precondition(format!(
                "d_model {} must be a positive multiple of n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.vocab_size == 0 || self.mlp_hidden == 0 || self.context_length == 0 {
            return Err(Error::precondition("vocab size, MLP width and context length must be positive"));
        }
        Ok(())
    }
}

/// Frozen encoder plus whatever it needs to produce decoder inputs.
#[derive(Clone, Debug)]
pub struct FeatureSource {
    pub encoder: Encoder,
    pub source: InputSource,
    pub mask: Option<UnitMask>,
}

impl FeatureSource {
    pub fn new(encoder: Encoder, source: InputSource, mask: Option<UnitMask>) -> Result<Self> {
        if source == InputSource::LocalizedUnits && mask.is_none() {
            return Err(Error::precondition("LOCALIZED_UNITS input needs a unit mask"));
        }
        Ok(Self { encoder, source, mask })
    }

    /// Feature width per position.
    pub fn dim(&self) -> usize {
        match (self.source, &self.mask) {
            (InputSource::LocalizedUnits, Some(m)) => m.k(),
            _ => self.encoder.config().d_model,
        }
    }

    /// positions × dim features for a token window.
    pub fn features(&self, ids: &[u32]) -> Result<RealMatrix> {
        match self.source {
            InputSource::Embeddings => self.encoder.embed(ids),
            InputSource::FinalLayer => Ok(self.encoder.forward_ids(ids)?.final_hidden),
            InputSource::LocalizedUnits => {
                let mask = self.mask.as_ref().expect("checked in new");
                extract_positions(&self.encoder.forward_ids(ids)?, mask)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
struct BlockIds {
    ln1: (usize, usize),
    wq: usize,
    wk: usize,
    wv: usize,
    wo: usize,
    ln2: (usize, usize),
    w_in: usize,
    w_out: usize,
}

/// Trainable causal pre-norm blocks, final layer norm and LM head.
#[derive(Clone, Debug, PartialEq)]
pub struct Decoder {
    config: DecoderConfig,
    input_dim: usize,
    /// Frozen input_dim × d_model map, present when the widths differ.
    projection: Option<RealMatrix>,
    params: ParamStore,
    blocks: Vec<BlockIds>,
    final_ln: (usize, usize),
    head: usize,
}

pub const DECODER_INIT_STD: f64 = 0.02;

impl Decoder {
    pub fn new(config: DecoderConfig, input_dim: usize) -> Result<Self> {
        config.validate()?;
        if input_dim == 0 {
            return Err(Error::precondition("decoder input width must be positive"));
        }
        let d = config.d_model;
        let mut rng = seeds::stream(config.seed, "decoder.init");
        let normal = Normal::new(0.0, DECODER_INIT_STD).expect("valid std");
        let mut gauss = |r: usize, c: usize| RealMatrix::from_fn(r, c, |_, _| normal.sample(&mut rng));
        let ones = |n: usize| RealMatrix::from_fn(1, n, |_, _| 1.0);
        let mut params = ParamStore::new();
        let mut blocks = Vec::new();
        for b in 0..config.n_blocks {
            let p = |s: &str| format!("block{b}.{s}");
            blocks.push(BlockIds {
                ln1: (params.add(p("ln1.gain"), ones(d)), params.add(p("ln1.bias"), RealMatrix::zeros(1, d))),
                wq: params.add(p("attn.wq"), gauss(d, d)),
                wk: params.add(p("attn.wk"), gauss(d, d)),
                wv: params.add(p("attn.wv"), gauss(d, d)),
                wo: params.add(p("attn.wo"), gauss(d, d)),
                ln2: (params.add(p("ln2.gain"), ones(d)), params.add(p("ln2.bias"), RealMatrix::zeros(1, d))),
                w_in: params.add(p("mlp.w_in"), gauss(d, config.mlp_hidden)),
                w_out: params.add(p("mlp.w_out"), gauss(config.mlp_hidden, d)),
            });
        }
        let final_ln = (params.add("final_ln.gain", ones(d)), params.add("final_ln.bias", RealMatrix::zeros(1, d)));
        let head = params.add("lm_head", gauss(d, config.vocab_size));
        let projection = (input_dim != d).then(|| {
            let mut prng = seeds::stream(config.seed, "decoder.input-projection");
            let std = 1.0 / (input_dim as f64).sqrt();
            RealMatrix::from_fn(input_dim, d, |_, _| prng.sample::<f64, _>(rand_distr::StandardNormal) * std)
        });
        Ok(Self {
            config,
            input_dim,
            projection,
            params,
            blocks,
            final_ln,
            head,
        })
    }

    pub fn config(&self) -> &DecoderConfig {
        &self.config
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn set_params(&mut self, params: ParamStore) -> Result<()> {
        if params.len() != self.params.len()
            || (0..params.len()).any(|i| params.get(i).shape() != self.params.get(i).shape())
        {
            return Err(Error::dims("parameter store does not match the decoder layout"));
        }
        self.params = params;
        Ok(())
    }

    pub fn projection(&self) -> Option<&RealMatrix> {
        self.projection.as_ref()
    }

    pub fn head_id(&self) -> usize {
        self.head
    }

    /// Records the forward pass over `features` (positions × input_dim) with
    /// `params` and returns the logits variable (positions × vocab).
    pub fn forward_on(&self, tape: &mut Tape, params: &ParamStore, features: &RealMatrix) -> Result<Var> {
        if features.cols() != self.input_dim {
            return Err(Error::dims(format!(
                "decoder expects {} input features, got {}",
                self.input_dim,
                features.cols()
            )));
        }
        if features.rows() == 0 {
            return Err(Error::precondition("decoder forward on zero positions"));
        }
        let x0 = match &self.projection {
            Some(p) => features.matmul(p)?,
            None => features.clone(),
        };
        let mut x = tape.constant(x0);
        let d = self.config.d_model;
        let heads = self.config.n_heads;
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        for b in &self.blocks {
            let g1 = tape.param(b.ln1.0, params.get(b.ln1.0).clone());
            let b1 = tape.param(b.ln1.1, params.get(b.ln1.1).clone());
            let h = tape.layer_norm(x, g1, b1)?;
            let wq = tape.param(b.wq, params.get(b.wq).clone());
            let wk = tape.param(b.wk, params.get(b.wk).clone());
            let wv = tape.param(b.wv, params.get(b.wv).clone());
            let wo = tape.param(b.wo, params.get(b.wo).clone());
            let q = tape.matmul(h, wq)?;
            let k = tape.matmul(h, wk)?;
            let v = tape.matmul(h, wv)?;
            let mut outs = Vec::with_capacity(heads);
            for hd in 0..heads {
                let qh = tape.slice_cols(q, hd * dh, dh)?;
                let kh = tape.slice_cols(k, hd * dh, dh)?;
                let vh = tape.slice_cols(v, hd * dh, dh)?;
                let s = tape.matmul_t(qh, kh)?;
                let s = tape.scale(s, scale);
                let p = tape.softmax(s, true);
                outs.push(tape.matmul(p, vh)?);
            }
            let cat = tape.concat_cols(&outs)?;
            let att = tape.matmul(cat, wo)?;
            x = tape.add(x, att)?;

            let g2 = tape.param(b.ln2.0, params.get(b.ln2.0).clone());
            let b2 = tape.param(b.ln2.1, params.get(b.ln2.1).clone());
            let h2 = tape.layer_norm(x, g2, b2)?;
            let w_in = tape.param(b.w_in, params.get(b.w_in).clone());
            let w_out = tape.param(b.w_out, params.get(b.w_out).clone());
            let m = tape.matmul(h2, w_in)?;
            let m = tape.silu(m);
            let m = tape.matmul(m, w_out)?;
            x = tape.add(x, m)?;
        }
        let gf = tape.param(self.final_ln.0, params.get(self.final_ln.0).clone());
        let bf = tape.param(self.final_ln.1, params.get(self.final_ln.1).clone());
        let h = tape.layer_norm(x, gf, bf)?;
        let head = tape.param(self.head, params.get(self.head).clone());
        tape.matmul(h, head)
    }

    pub fn logits(&self, features: &RealMatrix) -> Result<RealMatrix> {
        let mut tape = Tape::new();
        let l = self.forward_on(&mut tape, &self.params, features)?;
        Ok(tape.value(l).clone())
    }

    /// Mean next-token loss with an arbitrary parameter store.
    pub fn loss_with(&self, params: &ParamStore, features: &RealMatrix, targets: &[u32]) -> Result<f64> {
        let mut tape = Tape::new();
        let l = self.forward_on(&mut tape, params, features)?;
        let loss = tape.cross_entropy(l, targets)?;
        Ok(tape.value(loss).get(0, 0))
    }

    pub fn loss(&self, features: &RealMatrix, targets: &[u32]) -> Result<f64> {
        self.loss_with(&self.params, features, targets)
    }

    pub fn loss_and_grads_with(
        &self,
        params: &ParamStore,
        features: &RealMatrix,
        targets: &[u32],
    ) -> Result<(f64, Gradients)> {
        let mut tape = Tape::new();
        let l = self.forward_on(&mut tape, params, features)?;
        let loss = tape.cross_entropy(l, targets)?;
        let grads = tape.backward(loss, params.len())?;
        Ok((tape.value(loss).get(0, 0), grads))
    }

    pub fn loss_and_grads(&self, features: &RealMatrix, targets: &[u32]) -> Result<(f64, Gradients)> {
        self.loss_and_grads_with(&self.params, features, targets)
    }

    /// Per-position negative log-probability of `targets` in nats.
    pub fn token_nll(&self, features: &RealMatrix, targets: &[u32]) -> Result<Vec<f64>> {
        let logits = self.logits(features)?;
        if logits.rows() != targets.len() {
            return Err(Error::dims("one target per position required"));
        }
        targets
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                let row = logits.row(i);
                let t = t as usize;
                if t >= row.len() {
                    return Err(Error::OutOfRange { index: t, limit: row.len() });
                }
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + row.iter().map(|a| (a - max).exp()).sum::<f64>().ln();
                Ok(lse - row[t])
            })
            .collect()
    }
}

/// Central-difference gradient check over `n_coords` randomly sampled
/// parameter coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub checked: usize,
    /// Largest error per parameter name.
    pub per_param: Vec<(String, f64)>,
}

pub const GRAD_CHECK_STEP: f64 = 1e-5;
/// Denominator floor for the relative error, so coordinates whose true
/// gradient is numerically zero are judged on absolute error.
pub const GRAD_CHECK_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR)
}

pub fn grad_check(
    params: &ParamStore,
    analytic: &Gradients,
    loss_fn: impl Fn(&ParamStore) -> Result<f64>,
    n_coords: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    let total = params.n_scalars();
    if total == 0 {
        return Err(Error::precondition("no parameters to check"));
    }
    let mut rng = seeds::stream(seed, "decoder.grad-check");
    // every parameter group is visited, the rest are sampled by size
    let mut coords: Vec<(usize, usize)> = (0..params.len()).map(|p| (p, 0)).collect();
    while coords.len() < n_coords.max(params.len()) {
        let mut flat = rng.random_range(0..total);
        let mut p = 0;
        while flat >= params.get(p).data().len() {
            flat -= params.get(p).data().len();
            p += 1;
        }
        coords.push((p, flat));
    }
    for p in 0..params.len() {
        analytic.get(p)?;
    }
    let mut per_param: Vec<(String, f64)> = (0..params.len()).map(|p| (params.name(p).to_string(), 0.0)).collect();
    let mut work = params.clone();
    let mut max_err: f64 = 0.0;
    for &(p, i) in &coords {
        let orig = params.get(p).data()[i];
        work.get_mut(p).data_mut()[i] = orig + GRAD_CHECK_STEP;
        let up = loss_fn(&work)?;
        work.get_mut(p).data_mut()[i] = orig - GRAD_CHECK_STEP;
        let down = loss_fn(&work)?;
        work.get_mut(p).data_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * GRAD_CHECK_STEP);
        let err = relative_error(analytic.get(p)?.data()[i], numeric);
        per_param[p].1 = per_param[p].1.max(err);
        max_err = max_err.max(err);
    }
    Ok(GradCheckReport {
        max_relative_error: max_err,
        checked: coords.len(),
        per_param,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(input: usize) -> (Decoder, RealMatrix, Vec<u32>) {
        let cfg = DecoderConfig {
            n_blocks: 2,
            mlp_hidden: 12,
            context_length: 6,
            ..DecoderConfig::new(11, 8, 2, InputSource::Embeddings, 3)
        };
        let dec = Decoder::new(cfg, input).unwrap();
        let feats = RealMatrix::from_fn(6, input, |i, j| ((i * 7 + j * 3) % 5) as f64 * 0.3 - 0.5);
        (dec, feats, vec![1, 4, 0, 10, 3, 3])
    }

    #[test]
    fn zero_head_gives_uniform_loss() {
        let (mut dec, f, t) = toy(8);
        let h = dec.head_id();
        *dec.params_mut().get_mut(h) = RealMatrix::zeros(8, 11);
        assert!((dec.loss(&f, &t).unwrap() - 11f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn causal_logits_ignore_future() {
        let (dec, f, _) = toy(8);
        let a = dec.logits(&f).unwrap();
        let mut g = f.clone();
        for j in 0..8 {
            g.set(5, j, 9.0);
        }
        let b = dec.logits(&g).unwrap();
        for i in 0..5 {
            assert_eq!(a.row(i), b.row(i));
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let (dec, f, t) = toy(5);
        assert!(dec.projection().is_some());
        let (_, g) = dec.loss_and_grads(&f, &t).unwrap();
        let rep = grad_check(dec.params(), &g, |p| dec.loss_with(p, &f, &t), 200, 1).unwrap();
        assert!(rep.max_relative_error < 1e-4, "{rep:?}");
    }

    #[test]
    fn layout_validation() {
        assert!(Decoder::new(DecoderConfig { n_blocks: 3, ..DecoderConfig::new(5, 8, 2, InputSource::Embeddings, 0) }, 8).is_err());
        assert!(Decoder::new(DecoderConfig::new(5, 8, 3, InputSource::Embeddings, 0), 8).is_err());
    }
}
