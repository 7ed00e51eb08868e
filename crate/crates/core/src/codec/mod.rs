//! Prediction-driven compression.
//!
//! Counter mode stores the literal prefix, then alternates run lengths of
//! correct predictions with `@`-marked literals for the misses, ending with a
//! final run length. Rank mode stores, after the prefix, the position of each
//! true token in the predictor's ranking. Both bodies are text, DEFLATE'd and
//! placed behind a [`ContainerHeader`].

mod body;
mod container;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::predictor::{Predictor, PredictorConfig, PredictorError};
use crate::tokenizer::{Tokenizer, TokenizerError};
use crate::TokenId;

pub use body::{parse_body, serialize_body, BodyRecord};
pub use container::{deflate, inflate, Container, ContainerHeader, HEADER_LEN, MAGIC, VERSION};

pub const DEFAULT_LITERAL_PREFIX: u16 = 10;
pub const DEFAULT_DEFLATE_LEVEL: u32 = 6;

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("not a compressed container (bad magic)")]
    BadMagic,
    #[error("unsupported container version {0}")]
    BadVersion(u8),
    #[error("malformed container: {0}")]
    MalformedContainer(String),
    #[error("malformed body: {0}")]
    MalformedBody(String),
    #[error("{0} fingerprint does not match the container")]
    FingerprintMismatch(&'static str),
    #[error("rank {rank} is outside a vocabulary of {vocab_size}")]
    RankOutOfRange { rank: u64, vocab_size: usize },
    #[error("tokenizer has {tokenizer} entries but the predictor expects {predictor}")]
    VocabMismatch { tokenizer: usize, predictor: usize },
    #[error(transparent)]
    Predictor(#[from] PredictorError),
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CodecMode {
    Counter,
    Rank,
}

impl CodecMode {
    pub(crate) fn tag(self) -> u8 {
        match self {
            CodecMode::Counter => 0,
            CodecMode::Rank => 1,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(CodecMode::Counter),
            1 => Some(CodecMode::Rank),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CodecMode::Counter => "counter",
            CodecMode::Rank => "rank",
        }
    }
}

impl std::str::FromStr for CodecMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "counter" => Ok(CodecMode::Counter),
            "rank" => Ok(CodecMode::Rank),
            other => Err(format!("unknown codec mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CodecConfig {
    pub predictor: PredictorConfig,
    pub mode: CodecMode,
    pub literal_prefix_len: u16,
    pub deflate_level: u32,
}

impl CodecConfig {
    pub fn new(predictor: PredictorConfig) -> Self {
        Self {
            predictor,
            mode: CodecMode::Counter,
            literal_prefix_len: DEFAULT_LITERAL_PREFIX,
            deflate_level: DEFAULT_DEFLATE_LEVEL,
        }
    }

    pub fn with_mode(mut self, mode: CodecMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_literal_prefix(mut self, len: u16) -> Self {
        self.literal_prefix_len = len;
        self
    }

    pub fn with_deflate_level(mut self, level: u32) -> Self {
        self.deflate_level = level;
        self
    }
}

/// The predictor's view of recent tokens.
///
/// A token is appended, then the oldest is dropped once the list has reached
/// the window size, so at most `window - 1` tokens are visible when the next
/// prediction is made.
#[derive(Debug, Clone)]
pub struct ContextWindow {
    buf: Vec<TokenId>,
    start: usize,
    window: usize,
}

impl ContextWindow {
    pub fn new(window: u32) -> Self {
        Self {
            buf: Vec::new(),
            start: 0,
            window: window as usize,
        }
    }

    pub fn push(&mut self, token: TokenId) {
        self.buf.push(token);
        if self.buf.len() - self.start >= self.window {
            self.start += 1;
        }
        if self.start >= self.window.max(1024) {
            self.buf.drain(..self.start);
            self.start = 0;
        }
    }

    pub fn tokens(&self) -> &[TokenId] {
        &self.buf[self.start..]
    }
}

/// Counter-mode records for `tokens`.
pub fn counter_records(
    tokens: &[TokenId],
    predictor: &dyn Predictor,
    config: &PredictorConfig,
    literal_prefix_len: u16,
) -> Result<Vec<BodyRecord>, CodecError> {
    let split = tokens.len().min(literal_prefix_len as usize);
    let (prefix, rest) = tokens.split_at(split);
    let mut records: Vec<BodyRecord> = prefix.iter().map(|&t| BodyRecord::Literal(t)).collect();
    let mut context = ContextWindow::new(config.window());
    prefix.iter().for_each(|&t| context.push(t));

    let mut counter = 0u64;
    for &token in rest {
        if predictor.predict(context.tokens(), config)? == token {
            counter += 1;
        } else {
            records.push(BodyRecord::Counter(counter));
            records.push(BodyRecord::Literal(token));
            counter = 0;
        }
        context.push(token);
    }
    records.push(BodyRecord::Counter(counter));
    Ok(records)
}

/// Rebuild the token stream from counter-mode records, checking the grammar.
pub fn replay_counter_records(
    records: &[BodyRecord],
    predictor: &dyn Predictor,
    config: &PredictorConfig,
    literal_prefix_len: u16,
) -> Result<Vec<TokenId>, CodecError> {
    let vocab_size = predictor.vocab_size();
    let (prefix, rest) = split_prefix(records, literal_prefix_len, vocab_size)?;
    let mut tokens = prefix.clone();
    let mut context = ContextWindow::new(config.window());
    prefix.iter().for_each(|&t| context.push(t));

    if prefix.len() < literal_prefix_len as usize {
        return match rest {
            [BodyRecord::Counter(0)] => Ok(tokens),
            _ => Err(CodecError::MalformedBody(
                "a short input must end with a single zero counter".into(),
            )),
        };
    }
    if !matches!(rest.last(), Some(BodyRecord::Counter(_))) {
        return Err(CodecError::MalformedBody("missing final counter".into()));
    }
    for (i, record) in rest.iter().enumerate() {
        match (i % 2, *record) {
            (0, BodyRecord::Counter(n)) => {
                for _ in 0..n {
                    let token = predictor.predict(context.tokens(), config)?;
                    tokens.push(token);
                    context.push(token);
                }
            }
            (1, BodyRecord::Literal(token)) => {
                check_literal(token, vocab_size)?;
                tokens.push(token);
                context.push(token);
            }
            _ => {
                return Err(CodecError::MalformedBody(format!(
                    "record {} breaks the counter/literal alternation",
                    prefix.len() + i
                )))
            }
        }
    }
    Ok(tokens)
}

/// Rank-mode records: the prefix literals, then one rank per remaining token.
pub fn rank_records(
    tokens: &[TokenId],
    predictor: &dyn Predictor,
    config: &PredictorConfig,
    literal_prefix_len: u16,
) -> Result<Vec<BodyRecord>, CodecError> {
    let split = tokens.len().min(literal_prefix_len as usize);
    let (prefix, rest) = tokens.split_at(split);
    let mut records: Vec<BodyRecord> = prefix.iter().map(|&t| BodyRecord::Literal(t)).collect();
    let mut context = ContextWindow::new(config.window());
    prefix.iter().for_each(|&t| context.push(t));
    for &token in rest {
        let rank = predictor.rank_of(context.tokens(), token, config)?;
        records.push(BodyRecord::Counter(rank as u64));
        context.push(token);
    }
    Ok(records)
}

pub fn replay_rank_records(
    records: &[BodyRecord],
    predictor: &dyn Predictor,
    config: &PredictorConfig,
    literal_prefix_len: u16,
) -> Result<Vec<TokenId>, CodecError> {
    let vocab_size = predictor.vocab_size();
    let (prefix, rest) = split_prefix(records, literal_prefix_len, vocab_size)?;
    if prefix.len() < literal_prefix_len as usize && !rest.is_empty() {
        return Err(CodecError::MalformedBody("ranks after a short prefix".into()));
    }
    let mut tokens = prefix.clone();
    let mut context = ContextWindow::new(config.window());
    prefix.iter().for_each(|&t| context.push(t));
    for record in rest {
        let BodyRecord::Counter(rank) = *record else {
            return Err(CodecError::MalformedBody("literal after the prefix in rank mode".into()));
        };
        let out_of_range = CodecError::RankOutOfRange { rank, vocab_size };
        let Ok(index) = usize::try_from(rank) else {
            return Err(out_of_range);
        };
        let token = predictor
            .token_at_rank(context.tokens(), index, config)?
            .ok_or(out_of_range)?;
        tokens.push(token);
        context.push(token);
    }
    Ok(tokens)
}

/// Leading literals (at most `literal_prefix_len`) and the records after them.
fn split_prefix(
    records: &[BodyRecord],
    literal_prefix_len: u16,
    vocab_size: usize,
) -> Result<(Vec<TokenId>, &[BodyRecord]), CodecError> {
    let mut prefix = Vec::with_capacity(literal_prefix_len as usize);
    for record in records.iter().take(literal_prefix_len as usize) {
        match *record {
            BodyRecord::Literal(t) => {
                check_literal(t, vocab_size)?;
                prefix.push(t);
            }
            BodyRecord::Counter(_) => break,
        }
    }
    Ok((prefix.clone(), &records[prefix.len()..]))
}

fn check_literal(token: TokenId, vocab_size: usize) -> Result<(), CodecError> {
    if token as usize >= vocab_size {
        return Err(CodecError::MalformedBody(format!(
            "literal {token} is outside a vocabulary of {vocab_size}"
        )));
    }
    Ok(())
}

/// Token stream to body text, per `mode`.
pub fn encode_body(
    tokens: &[TokenId],
    predictor: &dyn Predictor,
    config: &CodecConfig,
) -> Result<Vec<u8>, CodecError> {
    let records = match config.mode {
        CodecMode::Counter => {
            counter_records(tokens, predictor, &config.predictor, config.literal_prefix_len)?
        }
        CodecMode::Rank => {
            rank_records(tokens, predictor, &config.predictor, config.literal_prefix_len)?
        }
    };
    Ok(serialize_body(&records))
}

/// Compress `text` into a self-describing container.
pub fn compress(
    text: &[u8],
    tokenizer: &dyn Tokenizer,
    predictor: &dyn Predictor,
    config: &CodecConfig,
) -> Result<Vec<u8>, CodecError> {
    if tokenizer.vocab_size() != predictor.vocab_size() {
        return Err(CodecError::VocabMismatch {
            tokenizer: tokenizer.vocab_size(),
            predictor: predictor.vocab_size(),
        });
    }
    let tokens = tokenizer.tokenize(text)?;
    compress_tokens(&tokens, tokenizer, predictor, config)
}

/// As [`compress`], for an already tokenized stream.
pub fn compress_tokens(
    tokens: &[TokenId],
    tokenizer: &dyn Tokenizer,
    predictor: &dyn Predictor,
    config: &CodecConfig,
) -> Result<Vec<u8>, CodecError> {
    let body = encode_body(tokens, predictor, config)?;
    let container = Container {
        header: ContainerHeader {
            mode: config.mode,
            config: config.predictor,
            literal_prefix_len: config.literal_prefix_len,
            tokenizer_fingerprint: tokenizer.fingerprint(),
            predictor_fingerprint: predictor.fingerprint(&config.predictor),
        },
        body,
    };
    Ok(container.to_bytes(config.deflate_level))
}

/// [`compress`] in rank mode.
pub fn compress_rank(
    text: &[u8],
    tokenizer: &dyn Tokenizer,
    predictor: &dyn Predictor,
    config: &CodecConfig,
) -> Result<Vec<u8>, CodecError> {
    compress(text, tokenizer, predictor, &config.with_mode(CodecMode::Rank))
}

/// Decompress a container of either mode, using the configuration it records.
pub fn decompress(
    container: &[u8],
    tokenizer: &dyn Tokenizer,
    predictor: &dyn Predictor,
) -> Result<Vec<u8>, CodecError> {
    let container = Container::from_bytes(container)?;
    let tokens = decode_container(&container, tokenizer, predictor)?;
    Ok(tokenizer.detokenize(&tokens)?)
}

/// Like [`decompress`], but also require the container to have been written
/// with `expected` as the predictor configuration.
pub fn decompress_expecting(
    container: &[u8],
    tokenizer: &dyn Tokenizer,
    predictor: &dyn Predictor,
    expected: &PredictorConfig,
) -> Result<Vec<u8>, CodecError> {
    let parsed = Container::from_bytes(container)?;
    if predictor.fingerprint(expected) != parsed.header.predictor_fingerprint {
        return Err(CodecError::FingerprintMismatch("predictor"));
    }
    let tokens = decode_container(&parsed, tokenizer, predictor)?;
    Ok(tokenizer.detokenize(&tokens)?)
}

/// [`decompress`] that also insists the container is in rank mode.
pub fn decompress_rank(
    container: &[u8],
    tokenizer: &dyn Tokenizer,
    predictor: &dyn Predictor,
) -> Result<Vec<u8>, CodecError> {
    let parsed = Container::from_bytes(container)?;
    if parsed.header.mode != CodecMode::Rank {
        return Err(CodecError::MalformedContainer("not a rank-mode container".into()));
    }
    let tokens = decode_container(&parsed, tokenizer, predictor)?;
    Ok(tokenizer.detokenize(&tokens)?)
}

/// Check fingerprints and replay the body into a token stream.
pub fn decode_container(
    container: &Container,
    tokenizer: &dyn Tokenizer,
    predictor: &dyn Predictor,
) -> Result<Vec<TokenId>, CodecError> {
    let header = &container.header;
    if tokenizer.fingerprint() != header.tokenizer_fingerprint {
        return Err(CodecError::FingerprintMismatch("tokenizer"));
    }
    if predictor.fingerprint(&header.config) != header.predictor_fingerprint {
        return Err(CodecError::FingerprintMismatch("predictor"));
    }
    let records = parse_body(&container.body)?;
    match header.mode {
        CodecMode::Counter => {
            replay_counter_records(&records, predictor, &header.config, header.literal_prefix_len)
        }
        CodecMode::Rank => {
            replay_rank_records(&records, predictor, &header.config, header.literal_prefix_len)
        }
    }
}
