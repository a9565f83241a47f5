//! Shared construction steps: corpus, tokenizer, encoder, masks, decoder setup.

use std::path::Path;

use anyhow::{bail, Context as _};
use suma_core::decoder::{
    token_stream, Decoder, DecoderConfig, FeatureSource, InputSource, PreparedSplit, TrainConfig,
};
use suma_core::encoder::{Depth, EmbeddingKind, Encoder, EncoderConfig};
use suma_core::localizer::{generate_localizer_stimuli, rank_encoder_units, LocalizeOptions, UnitMask};
use suma_core::tokenizer::{bpe_train, Tokenizer, Vocab, WordTokenizer};
use suma_core::{seeds, text};

use crate::settings::Settings;

pub fn corpus(s: &Settings) -> anyhow::Result<Vec<String>> {
    if let Some(path) = s.opt_str("corpus.path") {
        return text::read_corpus_file(Path::new(path)).with_context(|| format!("reading corpus {path}"));
    }
    let mut rng = seeds::stream(s.get("corpus.seed")?, "corpus");
    Ok(text::corpus(
        &mut rng,
        s.get("corpus.docs")?,
        s.get("corpus.min_words")?,
        s.get("corpus.max_words")?,
    ))
}

pub fn tokenizer(s: &Settings) -> anyhow::Result<Tokenizer> {
    match s.str("tokenizer.kind") {
        "word" => Ok(Tokenizer::Word(WordTokenizer)),
        "bpe" => match s.opt_str("tokenizer.vocab") {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading vocabulary {path}"))?;
                Ok(Tokenizer::Bpe(Vocab::from_text(&text)?))
            }
            None => Ok(Tokenizer::Bpe(bpe_train(&corpus(s)?, s.get("tokenizer.vocab_size")?)?)),
        },
        other => bail!("tokenizer.kind must be bpe or word, got {other:?}"),
    }
}

/// Encoder config from `encoder.*` keys; the seed is always the run seed.
pub fn encoder_config(s: &Settings, tok: &Tokenizer, seed: u64) -> anyhow::Result<EncoderConfig> {
    let vocab = match tok {
        Tokenizer::Bpe(v) => v.len(),
        Tokenizer::Word(_) => 1,
    };
    let mut cfg = EncoderConfig::from_kv(&s.kv, &EncoderConfig::suma(vocab, 128, 16, seed))?;
    cfg.vocab_size = vocab;
    cfg.seed = seed;
    if let Tokenizer::Word(_) = tok {
        cfg.embedding = EmbeddingKind::Hashed;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Full selectivity ranking (mask order = rank order) for one encoder.
pub fn ranking(s: &Settings, enc: &Encoder, tok: &Tokenizer, seed: u64) -> anyhow::Result<(UnitMask, Vec<String>)> {
    let stim = generate_localizer_stimuli(seed, s.get("localizer.items")?, s.get("localizer.length")?, tok)?;
    let ranked = rank_encoder_units(enc, tok, &stim, LocalizeOptions::default())?;
    Ok((ranked, stim.sentences))
}

pub struct DecoderSetup {
    pub tokenizer: Tokenizer,
    pub source: FeatureSource,
    pub decoder: Decoder,
    pub train: PreparedSplit,
    pub valid: PreparedSplit,
    pub train_tokens: Vec<u32>,
    pub train_config: TrainConfig,
}

pub fn decoder_setup(s: &Settings, seed: u64) -> anyhow::Result<DecoderSetup> {
    let tok = tokenizer(s)?;
    let vocab = tok.as_bpe().context("decoders need a BPE tokenizer")?.len();
    let mut ecfg = encoder_config(s, &tok, seed)?;
    ecfg.depth = Depth::Fixed(s.get("decoder.encoder_depth")?);
    let encoder = Encoder::new(ecfg)?;
    let input = InputSource::parse(s.str("decoder.input"))?;
    let mask = match input {
        InputSource::LocalizedUnits => Some(ranking(s, &encoder, &tok, seed)?.0.prefix(s.get("decoder.k")?)?),
        _ => None,
    };
    let source = FeatureSource::new(encoder, input, mask)?;

    let mut dcfg = DecoderConfig::new(vocab, s.get("decoder.d_model")?, s.get("decoder.heads")?, input, seed);
    dcfg.n_blocks = s.get("decoder.blocks")?;
    dcfg.context_length = s.get("decoder.context")?;
    let decoder = Decoder::new(dcfg.clone(), source.dim())?;

    let docs = corpus(s)?;
    let frac: f64 = s.get("decoder.valid_fraction")?;
    if !(0.0..1.0).contains(&frac) {
        bail!("decoder.valid_fraction must be in [0, 1)");
    }
    let n_valid = ((docs.len() as f64 * frac).round() as usize).clamp(1, docs.len().saturating_sub(1).max(1));
    let (train_docs, valid_docs) = docs.split_at(docs.len() - n_valid);
    let train_tokens = token_stream(&tok, train_docs);
    let valid_tokens = token_stream(&tok, valid_docs);
    let train = PreparedSplit::new(&source, &train_tokens, dcfg.context_length)?;
    let valid = PreparedSplit::new(&source, &valid_tokens, dcfg.context_length)?;

    let train_config = TrainConfig {
        epochs: s.get("decoder.epochs")?,
        batch_size: s.get("decoder.batch")?,
        peak_lr: s.get("decoder.lr")?,
        warmup_steps: s.get("decoder.warmup")?,
        eval_interval: s.get("decoder.eval_interval")?,
        max_steps: Some(s.get("decoder.steps")?),
        seed,
        ..TrainConfig::default()
    };
    Ok(DecoderSetup {
        tokenizer: tok,
        source,
        decoder,
        train,
        valid,
        train_tokens,
        train_config,
    })
}
