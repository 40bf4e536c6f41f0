//! Zero-shot dataset synthesis at desk scale.
//!
//! The crate wires a pluggable autoregressive backend into a pipeline that
//! samples labels uniformly, steers generation with prompt templates,
//! filters and deduplicates the output into a labeled pseudo-dataset,
//! trains a hashed loglinear task model on it, and scores dataset quality
//! (Self-BLEU diversity, validator correctness) alongside downstream
//! accuracy.

pub mod decoding;
pub mod error;
pub mod lm;
pub mod prompting;
pub mod quality;
pub mod rng;
pub mod synthesis;
pub mod tam;
pub mod text;
pub mod toyworld;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use decoding::{DebiasParams, DecodeParams, GenerationTrace, StopReason, Strategy};
pub use error::{Error, Result};
pub use lm::{train_toy_lm, LmBackend, LogitVector, TokenId, ToyNGramLm, Vocabulary};
pub use prompting::{Label, PromptTemplate, TaskCatalog, TaskKind, TaskSpec};
pub use quality::{EvalReport, QualityReport};
pub use synthesis::{FilterRules, GenerationManifest, PseudoDataset, PseudoExample};
pub use tam::{TamModel, TrainConfig};
