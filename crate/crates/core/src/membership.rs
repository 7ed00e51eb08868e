//! Training-set membership signal.
//!
//! A document the predictor has memorised compresses far better under the
//! best configuration than under a crippled one (short context, coarse
//! probabilities); an unseen document gains little from the better
//! configuration. The worst/best size ratio is the signal.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{self, CodecConfig, CodecError};
use crate::predictor::{Predictor, PredictorConfig, QuantBits, SWEEP_WINDOWS};
use crate::tokenizer::Tokenizer;

#[derive(Debug, Error)]
pub enum MembershipError {
    #[error("threshold must exceed 1, got {0}")]
    InvalidThreshold(f64),
    #[error("calibration needs at least one member and one non-member")]
    EmptyClass,
    #[error(transparent)]
    Codec(#[from] CodecError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    LikelyMember,
    LikelyNonMember,
}

impl Verdict {
    pub fn decide(degradation_ratio: f64, threshold: f64) -> Self {
        if degradation_ratio > threshold {
            Verdict::LikelyMember
        } else {
            Verdict::LikelyNonMember
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::LikelyMember => "likely-member",
            Verdict::LikelyNonMember => "likely-non-member",
        }
    }
}

/// The two configurations compared by a probe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeConfigs {
    pub worst: PredictorConfig,
    pub best: PredictorConfig,
}

impl ProbeConfigs {
    /// Window 16 with 4-bit probabilities against window 2048 with 16 bits.
    pub fn extremes() -> Self {
        Self {
            worst: PredictorConfig::worst(),
            best: PredictorConfig::best(),
        }
    }

    /// Extremes adapted to `predictor`.
    ///
    /// A predictor that only looks `k` tokens back gains nothing from longer
    /// windows, so the window range is mapped onto the useful one: the worst
    /// side sees a single token of context (window 2) and the best side sees
    /// all `k` (window `k + 1`). Unbounded predictors keep [`Self::extremes`].
    pub fn for_predictor(predictor: &dyn Predictor) -> Self {
        let Some(horizon) = predictor.context_horizon() else {
            return Self::extremes();
        };
        let max = SWEEP_WINDOWS[SWEEP_WINDOWS.len() - 1];
        let best_window = (horizon as u32).saturating_add(1).min(max).max(2);
        Self {
            worst: PredictorConfig::new(2.min(best_window), QuantBits::Four).expect("nonzero window"),
            best: PredictorConfig::new(best_window, QuantBits::Sixteen).expect("nonzero window"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MembershipReport {
    pub configs: ProbeConfigs,
    pub worst_size: u64,
    pub best_size: u64,
    pub deflate_size: u64,
    /// `worst_size / best_size`.
    pub degradation_ratio: f64,
    /// `deflate_size / best_size`.
    pub baseline_ratio: f64,
    pub threshold: f64,
    pub verdict: Verdict,
}

impl MembershipReport {
    pub fn from_sizes(
        configs: ProbeConfigs,
        worst_size: u64,
        best_size: u64,
        deflate_size: u64,
        threshold: f64,
    ) -> Self {
        let degradation_ratio = worst_size as f64 / best_size as f64;
        Self {
            configs,
            worst_size,
            best_size,
            deflate_size,
            degradation_ratio,
            baseline_ratio: deflate_size as f64 / best_size as f64,
            threshold,
            verdict: Verdict::decide(degradation_ratio, threshold),
        }
    }

    pub fn to_text(&self) -> String {
        format!(
            "worst (window {}, {} bits): {} bytes\n\
             best (window {}, {} bits): {} bytes\n\
             deflate: {} bytes\n\
             degradation ratio: {:.4}\n\
             baseline ratio: {:.4}\n\
             threshold: {:.4}\n\
             verdict: {}\n",
            self.configs.worst.window(),
            self.configs.worst.quant_bits(),
            self.worst_size,
            self.configs.best.window(),
            self.configs.best.quant_bits(),
            self.best_size,
            self.deflate_size,
            self.degradation_ratio,
            self.baseline_ratio,
            self.threshold,
            self.verdict.as_str(),
        )
    }
}

/// Compress `text` under both configurations and compare container sizes.
pub fn membership_probe(
    text: &[u8],
    tokenizer: &dyn Tokenizer,
    predictor: &dyn Predictor,
    configs: &ProbeConfigs,
    threshold: f64,
) -> Result<MembershipReport, MembershipError> {
    if threshold.is_nan() || threshold <= 1.0 {
        return Err(MembershipError::InvalidThreshold(threshold));
    }
    let (worst, best, deflated) = probe_sizes(text, tokenizer, predictor, configs)?;
    Ok(MembershipReport::from_sizes(*configs, worst, best, deflated, threshold))
}

/// `worst_size / best_size` for `text`.
pub fn degradation_ratio(
    text: &[u8],
    tokenizer: &dyn Tokenizer,
    predictor: &dyn Predictor,
    configs: &ProbeConfigs,
) -> Result<f64, MembershipError> {
    let (worst, best, _) = probe_sizes(text, tokenizer, predictor, configs)?;
    Ok(worst as f64 / best as f64)
}

fn probe_sizes(
    text: &[u8],
    tokenizer: &dyn Tokenizer,
    predictor: &dyn Predictor,
    configs: &ProbeConfigs,
) -> Result<(u64, u64, u64), MembershipError> {
    let tokens = tokenizer.tokenize(text).map_err(CodecError::from)?;
    let size = |config: PredictorConfig| -> Result<u64, MembershipError> {
        let packed = codec::compress_tokens(&tokens, tokenizer, predictor, &CodecConfig::new(config))?;
        Ok(packed.len() as u64)
    };
    let deflated = codec::deflate(text, codec::DEFAULT_DEFLATE_LEVEL).len() as u64;
    Ok((size(configs.worst)?, size(configs.best)?, deflated))
}

/// Decision threshold from labelled degradation ratios.
///
/// Cuts are considered below the smallest ratio, between each pair of
/// adjacent distinct ratios (at their midpoint) and at the largest ratio.
/// The cut with the fewest misclassifications wins, then the one with fewer
/// false members, then the lowest. When the classes separate this is the
/// midpoint between the largest non-member and the smallest member.
pub fn calibrate_threshold(member_ratios: &[f64], nonmember_ratios: &[f64]) -> Result<f64, MembershipError> {
    if member_ratios.is_empty() || nonmember_ratios.is_empty() {
        return Err(MembershipError::EmptyClass);
    }
    let mut values: Vec<f64> = member_ratios.iter().chain(nonmember_ratios).copied().collect();
    values.sort_by(f64::total_cmp);
    values.dedup();

    let mut candidates = Vec::with_capacity(values.len() + 1);
    candidates.push(values[0] - 1.0);
    candidates.extend(values.windows(2).map(|w| (w[0] + w[1]) / 2.0));
    candidates.push(values[values.len() - 1]);

    let score = |t: f64| {
        let false_members = nonmember_ratios.iter().filter(|&&r| r > t).count();
        let missed = member_ratios.iter().filter(|&&r| r <= t).count();
        (false_members + missed, false_members)
    };
    let best = candidates
        .into_iter()
        .min_by(|&a, &b| score(a).cmp(&score(b)).then(a.total_cmp(&b)))
        .expect("at least two candidates");
    Ok(best)
}

/// Probe every document and calibrate on the resulting ratios.
pub fn calibrate_threshold_on_documents(
    members: &[&[u8]],
    nonmembers: &[&[u8]],
    tokenizer: &dyn Tokenizer,
    predictor: &dyn Predictor,
    configs: &ProbeConfigs,
) -> Result<f64, MembershipError> {
    let ratios = |docs: &[&[u8]]| -> Result<Vec<f64>, MembershipError> {
        docs.iter()
            .map(|d| degradation_ratio(d, tokenizer, predictor, configs))
            .collect()
    };
    calibrate_threshold(&ratios(members)?, &ratios(nonmembers)?)
}
