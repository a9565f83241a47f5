//! Untrained Transformer-component encoder.
//!
//! A configurable chain of `{LN1, ATTN, LN2, MLP}` over frozen random token
//! embeddings, unrolled for one or more passes with optional weight sharing.
//! Every component output is recorded as an activation tap.

mod attention;
mod config;
mod flops;
mod record;
mod weights;

pub use attention::{layer_norm, multihead_attention, softmax_in_place, AttentionWeights, LN_EPS};
pub use config::{Aggregation, Component, Depth, EmbeddingKind, EncoderConfig, ADAPTIVE_TOKENS_PER_PASS};
pub use flops::{dense_flops, flops_estimate};
pub use record::{aggregate, aggregate_span, ActivationRecord, UnitCoord, UnitShape};
pub use weights::{BlockWeights, Embedding, EncoderWeights};

use crate::tokenizer::TokenSequence;
use crate::{Error, RealMatrix, Result};

/// Frozen encoder: validated config plus its weights.
#[derive(Clone, Debug)]
pub struct Encoder {
    config: EncoderConfig,
    weights: EncoderWeights,
}

impl Encoder {
    pub fn new(config: EncoderConfig) -> Result<Self> {
        config.validate()?;
        let weights = EncoderWeights::init(&config);
        Ok(Self { config, weights })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn weights(&self) -> &EncoderWeights {
        &self.weights
    }

    /// Unit layout for a sequence of `n_tokens` tokens.
    pub fn unit_shape(&self, n_tokens: usize) -> UnitShape {
        UnitShape {
            layers: self.config.passes(n_tokens),
            taps: self.config.components.clone(),
            d_model: self.config.d_model,
        }
    }

    /// Token embeddings (plus positional rows when enabled), seq×d_model.
    pub fn embed(&self, ids: &[u32]) -> Result<RealMatrix> {
        let d = self.config.d_model;
        let mut x = RealMatrix::zeros(ids.len(), d);
        for (t, &id) in ids.iter().enumerate() {
            self.weights.embedding.row_into(id, x.row_mut(t))?;
            if let Some(pos) = &self.weights.positional {
                if t >= pos.rows() {
                    return Err(Error::OutOfRange {
                        index: t,
                        limit: pos.rows(),
                    });
                }
                for (v, p) in x.row_mut(t).iter_mut().zip(pos.row(t)) {
                    *v += p;
                }
            }
        }
        Ok(x)
    }

    pub fn forward(&self, tokens: &TokenSequence) -> Result<ActivationRecord> {
        self.forward_ids(&tokens.ids)
    }

    /// Runs the component chain and records every tap of every pass.
    pub fn forward_ids(&self, ids: &[u32]) -> Result<ActivationRecord> {
        if ids.is_empty() {
            return Err(Error::precondition("forward on an empty token sequence"));
        }
        let cfg = &self.config;
        let passes = cfg.passes(ids.len());
        let mut record = ActivationRecord::new(passes, cfg.components.clone(), ids.len(), cfg.d_model);
        let mut h = self.embed(ids)?;
        for pass in 0..passes {
            let block = self.weights.block_for_pass(pass, cfg.shared_weights);
            let mut normed: Option<RealMatrix> = None;
            for (tap, comp) in cfg.components.iter().enumerate() {
                match comp {
                    Component::Ln1 | Component::Ln2 => {
                        let (g, b) = block.ln(*comp);
                        let y = layer_norm(&h, g, b);
                        record.write_tap(pass, tap, &y);
                        normed = Some(y);
                    }
                    Component::Attn => {
                        let input = normed.take().unwrap_or_else(|| h.clone());
                        let att = block.attention.as_ref().expect("validated");
                        let y = multihead_attention(&input, att, cfg.n_heads, cfg.causal)?;
                        record.write_tap(pass, tap, &y);
                        h = h.add(&y)?;
                    }
                    Component::Mlp => {
                        let input = normed.take().unwrap_or_else(|| h.clone());
                        let y = block.mlp(&input)?;
                        record.write_tap(pass, tap, &y);
                        h = h.add(&y)?;
                    }
                }
            }
        }
        record.final_hidden = h;
        Ok(record)
    }
}
