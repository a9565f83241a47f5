//! Seeded synthetic stimulus-response datasets.
//!
//! Responses are a planted linear readout of a reference encoder's features
//! (or of sentence length) plus independent per-channel noise.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::alignment::{Stimulus, StimulusResponseDataset};
use crate::encoder::{Aggregation, Encoder, EncoderConfig};
use crate::localizer::unit_scores;
use crate::numerics::zscore_in_place;
use crate::tokenizer::{Tokenizer, WordTokenizer};
use crate::{seeds, text, Error, RealMatrix, Result};

/// What the planted signal is a function of.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignalModel {
    /// Low-rank readout of a reference encoder's token-mean unit activations.
    Reference,
    /// Word count only.
    Length,
    /// No signal; responses are pure noise.
    Noise,
}

impl SignalModel {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "reference" => Ok(Self::Reference),
            "length" => Ok(Self::Length),
            "noise" => Ok(Self::Noise),
            _ => Err(Error::parse(format!("unknown signal model {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub name: String,
    pub seed: u64,
    pub n_stimuli: usize,
    /// Channels per subject.
    pub n_channels: usize,
    pub n_subjects: usize,
    pub signal: SignalModel,
    /// Signal-to-noise variance ratio per channel; infinite means noiseless.
    pub snr: f64,
    pub latent_dim: usize,
    pub group_size: usize,
    pub context_window: usize,
    pub min_words: usize,
    pub max_words: usize,
    pub reference_d_model: usize,
    pub reference_heads: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            name: "synthetic".into(),
            seed: 0,
            n_stimuli: 200,
            n_channels: 16,
            n_subjects: 4,
            signal: SignalModel::Reference,
            snr: 1.0,
            latent_dim: 8,
            group_size: 4,
            context_window: 0,
            min_words: 4,
            max_words: 12,
            reference_d_model: 64,
            reference_heads: 8,
        }
    }
}

fn gaussian_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> RealMatrix {
    RealMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

fn standardize_columns(m: &mut RealMatrix) {
    let mut t = m.transpose();
    for c in 0..t.rows() {
        zscore_in_place(t.row_mut(c));
    }
    *m = t.transpose();
}

/// Reference-encoder features: word tokenizer, hashed embeddings, token-mean readout.
fn reference_features(cfg: &SynthConfig, texts: &[String]) -> Result<RealMatrix> {
    let enc_seed = seeds::stream(cfg.seed, "synth.reference-encoder").random::<u64>();
    let enc_cfg = EncoderConfig::suma(1, cfg.reference_d_model, cfg.reference_heads, enc_seed).with_word_embeddings();
    let encoder = Encoder::new(enc_cfg)?;
    let (m, _) = unit_scores(&encoder, &Tokenizer::Word(WordTokenizer), texts, Aggregation::Mean)?;
    Ok(m)
}

/// Builds a dataset in memory. Same config → identical dataset.
pub fn generate_synthetic_dataset(cfg: &SynthConfig) -> Result<StimulusResponseDataset> {
    if cfg.n_subjects < 2 {
        return Err(Error::precondition("synthetic datasets need at least 2 subjects"));
    }
    if cfg.n_stimuli == 0 || cfg.n_channels == 0 || cfg.latent_dim == 0 || cfg.group_size == 0 {
        return Err(Error::precondition("stimuli, channels, latent size and group size must be positive"));
    }
    if !(cfg.snr > 0.0) {
        return Err(Error::precondition(format!("snr must be positive, got {}", cfg.snr)));
    }
    let mut rng = seeds::stream(cfg.seed, "synth.stimuli");
    let texts = text::corpus(&mut rng, cfg.n_stimuli, cfg.min_words, cfg.max_words);
    let stimuli: Vec<Stimulus> = texts
        .iter()
        .enumerate()
        .map(|(i, t)| Stimulus {
            text: t.clone(),
            group: (i / cfg.group_size) as u32,
            position: (i % cfg.group_size) as u32 + 1,
        })
        .collect();

    let mut rng = seeds::stream(cfg.seed, "synth.readout");
    let latent = match cfg.signal {
        SignalModel::Reference => {
            let mut f = reference_features(cfg, &texts)?;
            standardize_columns(&mut f);
            let p = gaussian_matrix(&mut rng, f.cols(), cfg.latent_dim);
            f.matmul(&p)?
        }
        SignalModel::Length => {
            let lengths: Vec<f64> = texts.iter().map(|t| text::words(t).len() as f64).collect();
            RealMatrix::from_fn(cfg.n_stimuli, cfg.latent_dim, |i, _| lengths[i])
        }
        SignalModel::Noise => RealMatrix::zeros(cfg.n_stimuli, cfg.latent_dim),
    };

    let total = cfg.n_channels * cfg.n_subjects;
    let mut signal = if cfg.signal == SignalModel::Length {
        // a sign and offset per channel; standardization removes the rest
        let w = gaussian_matrix(&mut rng, 1, total);
        RealMatrix::from_fn(cfg.n_stimuli, total, |i, c| latent.get(i, 0) * w.get(0, c))
    } else {
        latent.matmul(&gaussian_matrix(&mut rng, cfg.latent_dim, total))?
    };
    standardize_columns(&mut signal);

    let noise_sd = if cfg.signal == SignalModel::Noise {
        1.0
    } else if cfg.snr.is_infinite() {
        0.0
    } else {
        (1.0 / cfg.snr).sqrt()
    };
    let mut noise_rng = seeds::stream(cfg.seed, "synth.noise");
    let noise = gaussian_matrix(&mut noise_rng, cfg.n_stimuli, total);
    let responses = signal.add(&noise.scale(noise_sd))?;

    let channel_subject = (0..total).map(|c| format!("s{:02}", c / cfg.n_channels)).collect();
    StimulusResponseDataset::new(cfg.name.clone(), stimuli, responses, channel_subject, cfg.context_window)
}

/// The bundled two-dataset synthetic suite: isolated sentences and short
/// passages read with two sentences of context.
pub fn synthetic_suite(seed: u64) -> Result<Vec<StimulusResponseDataset>> {
    let sentences = SynthConfig {
        name: "synth-sentences".into(),
        seed,
        ..SynthConfig::default()
    };
    let passages = SynthConfig {
        name: "synth-passages".into(),
        seed: seed.wrapping_add(0x9e37_79b9),
        n_stimuli: 160,
        context_window: 2,
        group_size: 4,
        ..SynthConfig::default()
    };
    [sentences, passages].iter().map(generate_synthetic_dataset).collect()
}
