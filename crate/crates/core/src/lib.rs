//! Untrained shallow multihead-attention encoder toolkit.
//!
//! The crate bundles everything needed to take a randomly initialized
//! attention encoder, functionally localize its language-selective units,
//! benchmark those units against stimulus/response datasets, reproduce the
//! condition-level neuroscience analyses, and train small decoders on top of
//! the frozen encoder.
//!
//! Modules, bottom-up:
//!
//! * [`numerics`]: dense matrices, ridge regression, correlation, Welch's t, CKA, RDM.
//! * [`tokenizer`]: byte-level BPE and a hashed word tokenizer.
//! * [`encoder`]: the configurable untrained encoder with activation taps.
//! * [`localizer`]: sentence vs non-word contrast and top-k unit masks.
//! * [`alignment`]: linear predictivity / CKA / RDM benchmarks with consistency normalization.
//! * [`analyses`]: S/W/J/N univariate profiles and lexical vs syntactic pattern analysis.
//! * [`decoder`]: reverse-mode autodiff, trainable decoder blocks, perplexity and reading-time alignment.
//! * [`synth`]: seeded synthetic datasets that stand in for recordings.

pub mod alignment;
pub mod analyses;
pub mod config;
pub mod decoder;
pub mod encoder;
mod error;
pub mod localizer;
pub mod numerics;
pub mod par;
pub mod seeds;
pub mod synth;
pub mod text;
pub mod tokenizer;

pub use error::{Error, Result};
pub use numerics::RealMatrix;

/// Crate version recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
