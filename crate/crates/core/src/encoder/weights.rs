use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::attention::{silu, AttentionWeights};
use super::config::{Component, EmbeddingKind, EncoderConfig};
use crate::{seeds, Error, RealMatrix, Result};

/// Standard deviation of every random projection and embedding.
pub const INIT_STD: f64 = 0.02;

fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> RealMatrix {
    let dist = Normal::new(0.0, INIT_STD).expect("valid std");
    let mut m = RealMatrix::zeros(rows, cols);
    for v in m.data_mut() {
        *v = dist.sample(rng);
    }
    m
}

#[derive(Clone, Debug, PartialEq)]
pub enum Embedding {
    Table(RealMatrix),
    Hashed { seed: u64, d_model: usize },
}

impl Embedding {
    pub fn row_into(&self, id: u32, out: &mut [f64]) -> Result<()> {
        match self {
            Embedding::Table(t) => {
                if id as usize >= t.rows() {
                    return Err(Error::OutOfRange {
                        index: id as usize,
                        limit: t.rows(),
                    });
                }
                out.copy_from_slice(t.row(id as usize));
            }
            Embedding::Hashed { seed, d_model } => {
                debug_assert_eq!(out.len(), *d_model);
                let mut rng = seeds::stream_indexed(*seed, "encoder.hashed-embedding", id as u64);
                let dist = Normal::new(0.0, INIT_STD).expect("valid std");
                for v in out.iter_mut() {
                    *v = dist.sample(&mut rng);
                }
            }
        }
        Ok(())
    }

    pub fn row(&self, id: u32, d_model: usize) -> Result<Vec<f64>> {
        let mut v = vec![0.0; d_model];
        self.row_into(id, &mut v)?;
        Ok(v)
    }
}

/// Parameters of one block; only configured components are allocated.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockWeights {
    pub ln1: Option<(Vec<f64>, Vec<f64>)>,
    pub attention: Option<AttentionWeights>,
    pub ln2: Option<(Vec<f64>, Vec<f64>)>,
    /// (d_model × hidden, hidden × d_model)
    pub mlp: Option<(RealMatrix, RealMatrix)>,
}

impl BlockWeights {
    fn init(rng: &mut ChaCha8Rng, cfg: &EncoderConfig) -> Self {
        let d = cfg.d_model;
        let ln = || (vec![1.0; d], vec![0.0; d]);
        let attention = cfg.has(Component::Attn).then(|| AttentionWeights {
            wq: normal_matrix(rng, d, d),
            wk: normal_matrix(rng, d, d),
            wv: normal_matrix(rng, d, d),
            wo: normal_matrix(rng, d, d),
        });
        let mlp = cfg.has(Component::Mlp).then(|| {
            let w_in = normal_matrix(rng, d, cfg.mlp_hidden);
            let w_out = normal_matrix(rng, cfg.mlp_hidden, d);
            (w_in, w_out)
        });
        Self {
            ln1: cfg.has(Component::Ln1).then(ln),
            attention,
            ln2: cfg.has(Component::Ln2).then(ln),
            mlp,
        }
    }

    pub(crate) fn ln(&self, c: Component) -> (&[f64], &[f64]) {
        let p = match c {
            Component::Ln1 => self.ln1.as_ref(),
            _ => self.ln2.as_ref(),
        };
        let (g, b) = p.expect("layer norm configured");
        (g, b)
    }

    pub(crate) fn mlp(&self, x: &RealMatrix) -> Result<RealMatrix> {
        let (w_in, w_out) = self.mlp.as_ref().expect("mlp configured");
        let mut h = x.matmul(w_in)?;
        h.data_mut().iter_mut().for_each(|v| *v = silu(*v));
        h.matmul(w_out)
    }
}

/// Frozen random weights; fully determined by the config seed.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderWeights {
    pub embedding: Embedding,
    pub positional: Option<RealMatrix>,
    pub blocks: Vec<BlockWeights>,
}

impl EncoderWeights {
    /// i.i.d. normal(0, 0.02) projections and embeddings, unit LN gains, zero LN biases.
    ///
    /// Draw order is embedding, positional table, then block 0, 1, …; so a
    /// shared-weight model and an unshared one agree on block 0.
    pub fn init(cfg: &EncoderConfig) -> Self {
        let mut rng = seeds::stream(cfg.seed, "encoder.weights");
        let embedding = match cfg.embedding {
            EmbeddingKind::Table => Embedding::Table(normal_matrix(&mut rng, cfg.vocab_size, cfg.d_model)),
            EmbeddingKind::Hashed => Embedding::Hashed {
                seed: rng.random(),
                d_model: cfg.d_model,
            },
        };
        let positional = cfg
            .positional_encoding
            .then(|| normal_matrix(&mut rng, cfg.max_positions, cfg.d_model));
        let blocks = (0..cfg.n_blocks()).map(|_| BlockWeights::init(&mut rng, cfg)).collect();
        Self {
            embedding,
            positional,
            blocks,
        }
    }

    pub(crate) fn block_for_pass(&self, pass: usize, shared: bool) -> &BlockWeights {
        if shared {
            &self.blocks[0]
        } else {
            &self.blocks[pass]
        }
    }
}
