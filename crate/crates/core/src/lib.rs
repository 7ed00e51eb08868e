//! Lossless text compression that stores only what a deterministic next-token
//! predictor gets wrong.
//!
//! Text is tokenized, a short literal prefix seeds the predictor's context,
//! and every following token is either absorbed into a run-length counter
//! (the predictor guessed it) or written as an `@`-marked literal id (it did
//! not). The textual body is then wrapped in a DEFLATE envelope behind a
//! fixed header that pins the tokenizer, predictor and configuration.
//!
//! Modules:
//! - [`tokenizer`]: reversible byte/word vocabularies with a byte fallback plane.
//! - [`predictor`]: the predictor contract, a count-based Markov model with
//!   fixed-point probability quantization, and a client for external predictors.
//! - [`codec`]: counter and rank coding, body text format, container format.
//! - [`metrics`]: ratio, bits per character, batch sampling, sweeps and reports.
//! - [`membership`]: worst/best configuration size ratio as a training-set signal.

pub mod codec;
pub mod membership;
pub mod metrics;
pub mod predictor;
pub mod tokenizer;

/// Index of a token in a vocabulary.
pub type TokenId = u32;

pub use codec::{
    compress, compress_rank, decompress, decompress_expecting, decompress_rank, CodecConfig,
    CodecError, CodecMode,
};
pub use membership::{membership_probe, MembershipReport, ProbeConfigs, Verdict};
pub use metrics::{bpc, ratio, CompressionReport};
pub use predictor::{MarkovModel, Predictor, PredictorConfig, PredictorError, QuantBits};
pub use tokenizer::{Tokenizer, VocabKind, Vocabulary};
