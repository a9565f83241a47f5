use serde::{Deserialize, Serialize};

use crate::config::KvConfig;
use crate::{Error, Result};

/// Tokens per pass for adaptive depth: `passes = ceil(tokens / 256)`.
pub const ADAPTIVE_TOKENS_PER_PASS: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Component {
    Ln1,
    Attn,
    Ln2,
    Mlp,
}

impl Component {
    pub fn label(self) -> &'static str {
        match self {
            Component::Ln1 => "ln1",
            Component::Attn => "attn",
            Component::Ln2 => "ln2",
            Component::Mlp => "mlp",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ln1" => Ok(Component::Ln1),
            "attn" | "a" => Ok(Component::Attn),
            "ln2" => Ok(Component::Ln2),
            "mlp" => Ok(Component::Mlp),
            other => Err(Error::parse(format!("unknown component {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Depth {
    Fixed(usize),
    /// `ceil(tokens / 256)` passes; shared weights only.
    Adaptive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Aggregation {
    LastToken,
    Mean,
}

impl Aggregation {
    pub fn label(self) -> &'static str {
        match self {
            Aggregation::LastToken => "last",
            Aggregation::Mean => "mean",
        }
    }
}

/// How token ids become vectors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EmbeddingKind {
    /// Dense `vocab_size × d_model` table (BPE).
    Table,
    /// Row generated on demand from `(seed, id)`; open vocabularies.
    Hashed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub embedding: EmbeddingKind,
    pub d_model: usize,
    pub n_heads: usize,
    pub depth: Depth,
    /// Ordered subset of `{LN1, ATTN, LN2, MLP}`.
    pub components: Vec<Component>,
    pub positional_encoding: bool,
    pub max_positions: usize,
    pub aggregation: Aggregation,
    pub shared_weights: bool,
    pub mlp_hidden: usize,
    pub causal: bool,
    pub seed: u64,
}

impl EncoderConfig {
    /// Shared-weight LN1 + multihead attention, two passes, last-token readout.
    pub fn suma(vocab_size: usize, d_model: usize, n_heads: usize, seed: u64) -> Self {
        Self {
            vocab_size,
            embedding: EmbeddingKind::Table,
            d_model,
            n_heads,
            depth: Depth::Fixed(2),
            components: vec![Component::Ln1, Component::Attn],
            positional_encoding: false,
            max_positions: 2048,
            aggregation: Aggregation::LastToken,
            shared_weights: true,
            mlp_hidden: 4 * d_model,
            causal: true,
            seed,
        }
    }

    /// `suma` at full width: d = 4096 with 512 heads.
    pub fn suma_full_scale(vocab_size: usize, seed: u64) -> Self {
        Self::suma(vocab_size, 4096, 512, seed)
    }

    /// Full pre-norm block (LN1, ATTN, LN2, MLP).
    pub fn full_block(vocab_size: usize, d_model: usize, n_heads: usize, seed: u64) -> Self {
        Self {
            components: vec![Component::Ln1, Component::Attn, Component::Ln2, Component::Mlp],
            ..Self::suma(vocab_size, d_model, n_heads, seed)
        }
    }

    pub fn with_word_embeddings(mut self) -> Self {
        self.embedding = EmbeddingKind::Hashed;
        self
    }

    pub fn has(&self, c: Component) -> bool {
        self.components.contains(&c)
    }

    pub fn passes(&self, n_tokens: usize) -> usize {
        match self.depth {
            Depth::Fixed(n) => n,
            Depth::Adaptive => n_tokens.div_ceil(ADAPTIVE_TOKENS_PER_PASS).max(1),
        }
    }

    /// Number of distinct parameter blocks.
    pub fn n_blocks(&self) -> usize {
        match (self.shared_weights, self.depth) {
            (true, _) => 1,
            (false, Depth::Fixed(n)) => n,
            (false, Depth::Adaptive) => 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 {
            return Err(Error::precondition("d_model must be positive"));
        }
        if self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return Err(Error::precondition(format!(
                "n_heads {} must divide d_model {}",
                self.n_heads, self.d_model
            )));
        }
        if let Depth::Fixed(0) = self.depth {
            return Err(Error::precondition("unroll depth must be at least 1"));
        }
        if self.depth == Depth::Adaptive && !self.shared_weights {
            return Err(Error::precondition("adaptive depth requires shared weights"));
        }
        if self.components.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::precondition(
                "components must be an ordered subset of ln1, attn, ln2, mlp",
            ));
        }
        if self.has(Component::Mlp) && self.mlp_hidden == 0 {
            return Err(Error::precondition("mlp_hidden must be positive"));
        }
        if self.embedding == EmbeddingKind::Table && self.vocab_size == 0 {
            return Err(Error::precondition("table embeddings need a vocabulary"));
        }
        if self.positional_encoding && self.max_positions == 0 {
            return Err(Error::precondition("positional table needs max_positions > 0"));
        }
        Ok(())
    }

    pub fn to_kv(&self) -> KvConfig {
        let mut kv = KvConfig::new();
        kv.set("encoder.vocab_size", self.vocab_size);
        kv.set(
            "encoder.embedding",
            match self.embedding {
                EmbeddingKind::Table => "table",
                EmbeddingKind::Hashed => "hashed",
            },
        );
        kv.set("encoder.d_model", self.d_model);
        kv.set("encoder.n_heads", self.n_heads);
        kv.set(
            "encoder.depth",
            match self.depth {
                Depth::Fixed(n) => n.to_string(),
                Depth::Adaptive => "adaptive".into(),
            },
        );
        kv.set(
            "encoder.components",
            self.components.iter().map(|c| c.label()).collect::<Vec<_>>().join(","),
        );
        kv.set("encoder.positional_encoding", self.positional_encoding);
        kv.set("encoder.max_positions", self.max_positions);
        kv.set("encoder.aggregation", self.aggregation.label());
        kv.set("encoder.shared_weights", self.shared_weights);
        kv.set("encoder.mlp_hidden", self.mlp_hidden);
        kv.set("encoder.causal", self.causal);
        kv.set("encoder.seed", self.seed);
        kv
    }

    /// Reads `encoder.*` keys, falling back to `base` for missing ones.
    pub fn from_kv(kv: &KvConfig, base: &EncoderConfig) -> Result<Self> {
        let mut c = base.clone();
        c.vocab_size = kv.get_or("encoder.vocab_size", c.vocab_size)?;
        if let Some(e) = kv.get_str("encoder.embedding") {
            c.embedding = match e {
                "table" => EmbeddingKind::Table,
                "hashed" => EmbeddingKind::Hashed,
                other => return Err(Error::parse(format!("unknown embedding {other:?}"))),
            };
        }
        c.d_model = kv.get_or("encoder.d_model", c.d_model)?;
        c.n_heads = kv.get_or("encoder.n_heads", c.n_heads)?;
        if let Some(d) = kv.get_str("encoder.depth") {
            c.depth = if d.eq_ignore_ascii_case("adaptive") {
                Depth::Adaptive
            } else {
                Depth::Fixed(d.parse().map_err(|_| Error::parse(format!("bad depth {d:?}")))?)
            };
        }
        if let Some(list) = kv.get_str("encoder.components") {
            c.components = list
                .split(',')
                .filter(|s| !s.trim().is_empty())
                .map(Component::parse)
                .collect::<Result<_>>()?;
        }
        c.positional_encoding = kv.get_or("encoder.positional_encoding", c.positional_encoding)?;
        c.max_positions = kv.get_or("encoder.max_positions", c.max_positions)?;
        if let Some(a) = kv.get_str("encoder.aggregation") {
            c.aggregation = match a {
                "last" => Aggregation::LastToken,
                "mean" => Aggregation::Mean,
                other => return Err(Error::parse(format!("unknown aggregation {other:?}"))),
            };
        }
        c.shared_weights = kv.get_or("encoder.shared_weights", c.shared_weights)?;
        c.mlp_hidden = kv.get_or("encoder.mlp_hidden", c.mlp_hidden)?;
        c.causal = kv.get_or("encoder.causal", c.causal)?;
        c.seed = kv.get_or("encoder.seed", c.seed)?;
        c.validate()?;
        Ok(c)
    }

    pub fn hash(&self) -> String {
        self.to_kv().hash()
    }
}
