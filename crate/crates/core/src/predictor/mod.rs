//! Next-token predictors.
//!
//! A predictor maps a bounded context to a total order over the vocabulary.
//! Predictions must be pure: compression and decompression call the same
//! predictor on the same contexts and rely on identical answers.

mod bridge;
mod markov;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::TokenId;

pub use bridge::{Bridge, BridgeIdentity, ProcessTransport, Transport};
pub use markov::MarkovModel;

/// Windows swept by the benchmark, smallest to largest.
pub const SWEEP_WINDOWS: [u32; 8] = [16, 32, 64, 128, 256, 512, 1024, 2048];

/// Quantization levels swept by the benchmark, coarsest first.
pub const SWEEP_QUANTS: [QuantBits; 3] = [QuantBits::Four, QuantBits::Eight, QuantBits::Sixteen];

#[derive(Debug, Error)]
pub enum PredictorError {
    #[error("corpus needs at least two tokens")]
    EmptyCorpus,
    #[error("order must be at least 1")]
    ZeroOrder,
    #[error("token id {id} is out of range for vocabulary size {vocab_size}")]
    TokenOutOfRange { id: TokenId, vocab_size: usize },
    #[error("not a model file (bad magic)")]
    BadMagic,
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid predictor config: {0}")]
    InvalidConfig(String),
    #[error("bridge protocol: {0}")]
    Protocol(String),
    #[error("bridge reported: {0}")]
    Remote(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Fractional bits kept when probabilities are stored in fixed point.
///
/// 16 stands in for float16/bfloat16, 8 for int8 and 4 for int4.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum QuantBits {
    Four = 4,
    Eight = 8,
    Sixteen = 16,
}

impl QuantBits {
    pub fn bits(self) -> u32 {
        self as u32
    }

    /// `floor(count / total * 2^bits)`, the fixed-point probability.
    ///
    /// Truncation makes coarsening idempotent: quantizing to 16 bits and then
    /// to 4 gives the same value as quantizing straight to 4.
    pub fn quantize(self, count: u64, total: u64) -> u64 {
        debug_assert!(total > 0 && count <= total);
        ((count as u128) << self.bits()).div_euclid(total as u128) as u64
    }

    /// Re-quantize a value already held at `from` bits.
    pub fn coarsen(self, value: u64, from: QuantBits) -> u64 {
        debug_assert!(from.bits() >= self.bits());
        value >> (from.bits() - self.bits())
    }
}

impl From<QuantBits> for u8 {
    fn from(q: QuantBits) -> u8 {
        q as u8
    }
}

impl TryFrom<u8> for QuantBits {
    type Error = PredictorError;

    fn try_from(bits: u8) -> Result<Self, Self::Error> {
        match bits {
            4 => Ok(QuantBits::Four),
            8 => Ok(QuantBits::Eight),
            16 => Ok(QuantBits::Sixteen),
            other => Err(PredictorError::InvalidConfig(format!(
                "quant_bits must be 4, 8 or 16, got {other}"
            ))),
        }
    }
}

impl FromStr for QuantBits {
    type Err = PredictorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bits: u8 = s
            .parse()
            .map_err(|_| PredictorError::InvalidConfig(format!("bad quant_bits {s:?}")))?;
        bits.try_into()
    }
}

impl fmt::Display for QuantBits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.bits())
    }
}

/// The two tuning axes: context window and probability precision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PredictorConfig {
    window: u32,
    quant_bits: QuantBits,
}

impl PredictorConfig {
    pub fn new(window: u32, quant_bits: QuantBits) -> Result<Self, PredictorError> {
        if window == 0 {
            return Err(PredictorError::InvalidConfig("window must be at least 1".into()));
        }
        Ok(Self { window, quant_bits })
    }

    /// Largest window, 16-bit probabilities.
    pub fn best() -> Self {
        Self {
            window: SWEEP_WINDOWS[SWEEP_WINDOWS.len() - 1],
            quant_bits: QuantBits::Sixteen,
        }
    }

    /// Smallest window, 4-bit probabilities.
    pub fn worst() -> Self {
        Self {
            window: SWEEP_WINDOWS[0],
            quant_bits: QuantBits::Four,
        }
    }

    pub fn window(&self) -> u32 {
        self.window
    }

    pub fn quant_bits(&self) -> QuantBits {
        self.quant_bits
    }

    pub(crate) fn hash_into(&self, hasher: &mut impl sha2::Digest) {
        hasher.update(self.window.to_le_bytes());
        hasher.update([self.quant_bits as u8]);
    }
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self::best()
    }
}

/// Deterministic next-token prediction over a bounded context.
///
/// `context` holds the most recent tokens, oldest first; callers have already
/// applied the window. `rank` returns every token id exactly once, most likely
/// first, and `rank(..)[0] == predict(..)`.
pub trait Predictor {
    fn vocab_size(&self) -> usize;

    /// Digest binding this predictor and `config`; equal inputs give equal digests.
    fn fingerprint(&self, config: &PredictorConfig) -> [u8; 32];

    fn predict(&self, context: &[TokenId], config: &PredictorConfig)
        -> Result<TokenId, PredictorError>;

    fn rank(&self, context: &[TokenId], config: &PredictorConfig)
        -> Result<Vec<TokenId>, PredictorError>;

    /// Position of `token` in `rank(context)`.
    fn rank_of(
        &self,
        context: &[TokenId],
        token: TokenId,
        config: &PredictorConfig,
    ) -> Result<usize, PredictorError> {
        self.rank(context, config)?
            .iter()
            .position(|&t| t == token)
            .ok_or(PredictorError::TokenOutOfRange {
                id: token,
                vocab_size: self.vocab_size(),
            })
    }

    /// Token at position `rank` of `rank(context)`, `None` past the end.
    fn token_at_rank(
        &self,
        context: &[TokenId],
        rank: usize,
        config: &PredictorConfig,
    ) -> Result<Option<TokenId>, PredictorError> {
        Ok(self.rank(context, config)?.get(rank).copied())
    }

    /// Longest context suffix that can influence a prediction, if bounded.
    fn context_horizon(&self) -> Option<usize> {
        None
    }
}
