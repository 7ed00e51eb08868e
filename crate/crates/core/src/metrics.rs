//! Compression ratio, bits per character, corpus batching and sweeps.

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{self, CodecConfig, CodecError};
use crate::predictor::{Predictor, PredictorConfig, QuantBits};
use crate::tokenizer::{Tokenizer, TokenizerError};
use crate::TokenId;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("division by zero: {0} is zero")]
    DivisionByZero(&'static str),
    #[error("corpus is empty or has fewer lines than batches")]
    EmptyCorpus,
    #[error("sweep lists must not be empty")]
    EmptySweep,
    #[error("container failed verification at window {window}, {quant_bits} bits")]
    RoundTripFailed { window: u32, quant_bits: QuantBits },
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
}

/// `original / compressed`.
pub fn ratio(original_bytes: u64, compressed_bytes: u64) -> Result<f64, MetricsError> {
    if compressed_bytes == 0 {
        return Err(MetricsError::DivisionByZero("compressed size"));
    }
    Ok(original_bytes as f64 / compressed_bytes as f64)
}

/// Bits of output per input character: `8 * compressed / characters`.
pub fn bpc(compressed_bytes: u64, characters: u64) -> Result<f64, MetricsError> {
    if characters == 0 {
        return Err(MetricsError::DivisionByZero("character count"));
    }
    Ok(8.0 * compressed_bytes as f64 / characters as f64)
}

/// Unicode scalar values for valid UTF-8, bytes otherwise.
pub fn character_count(text: &[u8]) -> u64 {
    match std::str::from_utf8(text) {
        Ok(s) => s.chars().count() as u64,
        Err(_) => text.len() as u64,
    }
}

/// First line of each of `n_batches` evenly spaced batches over `total_lines`.
///
/// Batch `i` starts at line `i * floor(total_lines / n_batches)`.
pub fn batch_start_lines(total_lines: u64, n_batches: u64) -> Result<Vec<u64>, MetricsError> {
    if n_batches == 0 || total_lines < n_batches {
        return Err(MetricsError::EmptyCorpus);
    }
    let stride = total_lines / n_batches;
    Ok((0..n_batches).map(|i| i * stride).collect())
}

/// Byte offset of the start of every line.
fn line_starts(corpus: &[u8]) -> Vec<usize> {
    let mut starts = vec![0];
    starts.extend(
        corpus
            .iter()
            .enumerate()
            .filter(|&(i, &b)| b == b'\n' && i + 1 < corpus.len())
            .map(|(i, _)| i + 1),
    );
    starts
}

/// A batch of tokens cut from a corpus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub start_line: u64,
    pub tokens: Vec<TokenId>,
}

/// Evenly spaced batches of up to `batch_tokens` tokens each, starting on
/// line boundaries and running forward (possibly across lines) until the
/// token budget or the corpus ends.
pub fn sample_batches(
    corpus: &[u8],
    n_batches: usize,
    batch_tokens: usize,
    tokenizer: &dyn Tokenizer,
) -> Result<Vec<Batch>, MetricsError> {
    if corpus.is_empty() {
        return Err(MetricsError::EmptyCorpus);
    }
    let starts = line_starts(corpus);
    batch_start_lines(starts.len() as u64, n_batches as u64)?
        .into_iter()
        .map(|line| {
            let offset = starts[line as usize];
            let tokens = tokenizer.tokenize_prefix(&corpus[offset..], batch_tokens)?;
            Ok(Batch {
                start_line: line,
                tokens,
            })
        })
        .collect()
}

/// One measured compression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressionReport {
    pub document: String,
    /// `None` for the DEFLATE-only baseline.
    pub config: Option<PredictorConfig>,
    /// `"counter"`, `"rank"` or `"deflate"`.
    pub mode: String,
    pub original_bytes: u64,
    pub compressed_bytes: u64,
    pub characters: u64,
    pub ratio: f64,
    pub bpc: f64,
    pub tokens_per_second: f64,
}

impl CompressionReport {
    fn new(
        document: &str,
        config: Option<PredictorConfig>,
        mode: &str,
        text: &[u8],
        compressed_bytes: u64,
        tokens_per_second: f64,
    ) -> Result<Self, MetricsError> {
        let characters = character_count(text);
        Ok(Self {
            document: document.to_owned(),
            config,
            mode: mode.to_owned(),
            original_bytes: text.len() as u64,
            compressed_bytes,
            characters,
            ratio: ratio(text.len() as u64, compressed_bytes)?,
            bpc: if characters == 0 { 0.0 } else { bpc(compressed_bytes, characters)? },
            tokens_per_second,
        })
    }

    /// The DEFLATE-only comparison point for `text`.
    pub fn deflate_baseline(document: &str, text: &[u8], level: u32) -> Result<Self, MetricsError> {
        let started = Instant::now();
        let size = codec::deflate(text, level).len() as u64;
        let elapsed = started.elapsed().as_secs_f64();
        let bytes_per_second = if elapsed > 0.0 { text.len() as f64 / elapsed } else { 0.0 };
        Self::new(document, None, "deflate", text, size, bytes_per_second)
    }
}

pub const CSV_HEADER: &str =
    "document,window,quant_bits,mode,original_bytes,compressed_bytes,ratio,bpc,tokens_per_second";

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

/// Header row plus one comma-separated line per report.
pub fn reports_to_csv(reports: &[CompressionReport]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in reports {
        let (window, quant) = match r.config {
            Some(c) => (c.window().to_string(), c.quant_bits().to_string()),
            None => (String::new(), String::new()),
        };
        writeln!(
            out,
            "{},{},{},{},{},{},{:.6},{:.6},{:.1}",
            csv_field(&r.document),
            window,
            quant,
            r.mode,
            r.original_bytes,
            r.compressed_bytes,
            r.ratio,
            r.bpc,
            r.tokens_per_second
        )
        .unwrap();
    }
    out
}

pub fn reports_to_json(reports: &[CompressionReport]) -> String {
    serde_json::to_string_pretty(reports).expect("reports always serialize")
}

/// Compress `text` at every `(window, quant)` pair, verifying each container
/// decompresses back to `text`, then append the DEFLATE baseline.
///
/// Reports come back in sweep order: windows outer, quantization inner.
pub fn bench_sweep(
    document: &str,
    text: &[u8],
    tokenizer: &dyn Tokenizer,
    predictor: &dyn Predictor,
    windows: &[u32],
    quants: &[QuantBits],
    base: &CodecConfig,
) -> Result<Vec<CompressionReport>, MetricsError> {
    if windows.is_empty() || quants.is_empty() {
        return Err(MetricsError::EmptySweep);
    }
    let tokens = tokenizer.tokenize(text)?;
    let mut reports = Vec::with_capacity(windows.len() * quants.len() + 1);
    for &window in windows {
        for &quant_bits in quants {
            let predictor_config = PredictorConfig::new(window, quant_bits)
                .map_err(|e| MetricsError::Codec(CodecError::Predictor(e)))?;
            let config = CodecConfig {
                predictor: predictor_config,
                ..*base
            };
            let started = Instant::now();
            let packed = codec::compress_tokens(&tokens, tokenizer, predictor, &config)?;
            let elapsed = started.elapsed().as_secs_f64();
            if codec::decompress(&packed, tokenizer, predictor)? != text {
                return Err(MetricsError::RoundTripFailed { window, quant_bits });
            }
            let tps = if elapsed > 0.0 { tokens.len() as f64 / elapsed } else { 0.0 };
            reports.push(CompressionReport::new(
                document,
                Some(predictor_config),
                base.mode.as_str(),
                text,
                packed.len() as u64,
                tps,
            )?);
        }
    }
    reports.push(CompressionReport::deflate_baseline(document, text, base.deflate_level)?);
    Ok(reports)
}

/// Convenience for a single configuration, verified like a sweep point.
pub fn measure(
    document: &str,
    text: &[u8],
    tokenizer: &dyn Tokenizer,
    predictor: &dyn Predictor,
    config: &CodecConfig,
) -> Result<CompressionReport, MetricsError> {
    let mut reports = bench_sweep(
        document,
        text,
        tokenizer,
        predictor,
        &[config.predictor.window()],
        &[config.predictor.quant_bits()],
        config,
    )?;
    reports.truncate(1);
    Ok(reports.pop().expect("one sweep point"))
}
