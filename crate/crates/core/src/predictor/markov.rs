use std::collections::HashMap;
use std::io::{Read, Write};

use sha2::{Digest, Sha256};

use super::{Predictor, PredictorConfig, PredictorError, QuantBits};
use crate::TokenId;

const MODEL_MAGIC: &[u8; 5] = b"NTPM1";

/// Successor counts for one context, most frequent first, ties by id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct Successors {
    total: u64,
    by_count: Vec<(TokenId, u32)>,
}

impl Successors {
    fn from_counts(counts: HashMap<TokenId, u32>) -> Self {
        let mut by_count: Vec<(TokenId, u32)> = counts.into_iter().collect();
        by_count.sort_unstable_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        let total = by_count.iter().map(|&(_, n)| n as u64).sum();
        Self { total, by_count }
    }

    fn q(&self, count: u32, quant: QuantBits) -> u64 {
        quant.quantize(count as u64, self.total)
    }

    fn count_of(&self, token: TokenId) -> u32 {
        self.by_count
            .iter()
            .find(|&&(t, _)| t == token)
            .map_or(0, |&(_, n)| n)
    }

    fn argmax(&self, quant: QuantBits) -> TokenId {
        let Some(&(_, top)) = self.by_count.first() else {
            return 0;
        };
        let qmax = self.q(top, quant);
        if qmax == 0 {
            // Every token, seen or not, sits at zero.
            return 0;
        }
        self.by_count
            .iter()
            .take_while(|&&(_, n)| self.q(n, quant) == qmax)
            .map(|&(t, _)| t)
            .min()
            .unwrap_or(0)
    }

    /// Tokens with a nonzero quantized probability in ranking order.
    fn positive_ranking(&self, quant: QuantBits) -> Vec<(u64, TokenId)> {
        let mut ranked: Vec<(u64, TokenId)> = self
            .by_count
            .iter()
            .map(|&(t, n)| (self.q(n, quant), t))
            .take_while(|&(q, _)| q > 0)
            .collect();
        ranked.sort_unstable_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        ranked
    }

    fn full_ranking(&self, quant: QuantBits, vocab_size: usize) -> Vec<TokenId> {
        let positive = self.positive_ranking(quant);
        let mut listed = vec![false; vocab_size];
        let mut out = Vec::with_capacity(vocab_size);
        for &(_, t) in &positive {
            listed[t as usize] = true;
            out.push(t);
        }
        out.extend((0..vocab_size as TokenId).filter(|&t| !listed[t as usize]));
        out
    }

    fn rank_of(&self, token: TokenId, quant: QuantBits) -> usize {
        let qt = self.q(self.count_of(token), quant);
        if qt > 0 {
            self.by_count
                .iter()
                .filter(|&&(t, n)| {
                    let q = self.q(n, quant);
                    q > qt || (q == qt && t < token)
                })
                .count()
        } else {
            let mut positives = 0;
            let mut positives_below = 0;
            for &(t, n) in &self.by_count {
                if self.q(n, quant) > 0 {
                    positives += 1;
                    if t < token {
                        positives_below += 1;
                    }
                }
            }
            positives + token as usize - positives_below
        }
    }

    fn token_at_rank(&self, rank: usize, quant: QuantBits, vocab_size: usize) -> Option<TokenId> {
        if rank >= vocab_size {
            return None;
        }
        let positive = self.positive_ranking(quant);
        if let Some(&(_, t)) = positive.get(rank) {
            return Some(t);
        }
        // The (rank - |positive|)-th id, counting upwards, that is not positive.
        let mut ids: Vec<TokenId> = positive.iter().map(|&(_, t)| t).collect();
        ids.sort_unstable();
        let mut candidate = (rank - positive.len()) as u64;
        for &t in &ids {
            if t as u64 <= candidate {
                candidate += 1;
            } else {
                break;
            }
        }
        Some(candidate as TokenId)
    }
}

/// Count-based n-gram model with longest-suffix backoff.
///
/// Stores, for every context of length `1..=order` seen in the training
/// stream, how often each token followed it, plus global unigram counts used
/// when no suffix of the context was seen.
#[derive(Debug, Clone)]
pub struct MarkovModel {
    order: usize,
    vocab_size: usize,
    contexts: HashMap<Vec<TokenId>, Successors>,
    unigram: Successors,
    digest: [u8; 32],
}

impl PartialEq for MarkovModel {
    fn eq(&self, other: &Self) -> bool {
        self.digest == other.digest
    }
}

impl MarkovModel {
    pub fn train(tokens: &[TokenId], order: usize, vocab_size: usize) -> Result<Self, PredictorError> {
        if order == 0 {
            return Err(PredictorError::ZeroOrder);
        }
        if order > u8::MAX as usize {
            return Err(PredictorError::InvalidModel(format!("order {order} exceeds 255")));
        }
        if tokens.len() < 2 {
            return Err(PredictorError::EmptyCorpus);
        }
        if let Some(&id) = tokens.iter().find(|&&t| t as usize >= vocab_size) {
            return Err(PredictorError::TokenOutOfRange { id, vocab_size });
        }

        let mut unigram: HashMap<TokenId, u32> = HashMap::new();
        for &t in tokens {
            *unigram.entry(t).or_insert(0) += 1;
        }
        let mut raw: HashMap<Vec<TokenId>, HashMap<TokenId, u32>> = HashMap::new();
        for len in 1..=order {
            for window in tokens.windows(len + 1) {
                let (context, next) = window.split_at(len);
                *raw.entry(context.to_vec())
                    .or_default()
                    .entry(next[0])
                    .or_insert(0) += 1;
            }
        }
        let contexts = raw
            .into_iter()
            .map(|(c, counts)| (c, Successors::from_counts(counts)))
            .collect();
        Ok(Self::assemble(order, vocab_size, contexts, Successors::from_counts(unigram)))
    }

    fn assemble(
        order: usize,
        vocab_size: usize,
        contexts: HashMap<Vec<TokenId>, Successors>,
        unigram: Successors,
    ) -> Self {
        let mut model = Self {
            order,
            vocab_size,
            contexts,
            unigram,
            digest: [0; 32],
        };
        model.digest = Sha256::digest(model.to_bytes()).into();
        model
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// How often `next` followed `context` in training; the empty context
    /// gives unigram counts.
    pub fn count(&self, context: &[TokenId], next: TokenId) -> u32 {
        if context.is_empty() {
            return self.unigram.count_of(next);
        }
        self.contexts.get(context).map_or(0, |s| s.count_of(next))
    }

    /// Digest of the serialized model.
    pub fn digest(&self) -> [u8; 32] {
        self.digest
    }

    fn backoff(&self, context: &[TokenId]) -> &Successors {
        let longest = context.len().min(self.order);
        (1..=longest)
            .rev()
            .find_map(|len| self.contexts.get(&context[context.len() - len..]))
            .unwrap_or(&self.unigram)
    }

    /// All `(context, next, count)` triples in lexicographic order.
    fn triples(&self) -> Vec<(&[TokenId], TokenId, u32)> {
        let mut out: Vec<(&[TokenId], TokenId, u32)> = self
            .unigram
            .by_count
            .iter()
            .map(|&(t, n)| (&[][..], t, n))
            .collect();
        for (context, succ) in &self.contexts {
            out.extend(succ.by_count.iter().map(|&(t, n)| (context.as_slice(), t, n)));
        }
        out.sort_unstable_by(|a, b| a.0.cmp(b.0).then(a.1.cmp(&b.1)));
        out
    }

    /// Magic, u8 order, u32 vocab size, u32 triple count, then per triple a
    /// u32 context length, the context ids, next id and count, all u32 LE.
    pub fn to_bytes(&self) -> Vec<u8> {
        let triples = self.triples();
        let mut out = Vec::with_capacity(14 + triples.len() * (12 + 4 * self.order));
        out.extend_from_slice(MODEL_MAGIC);
        out.push(self.order as u8);
        out.extend_from_slice(&(self.vocab_size as u32).to_le_bytes());
        out.extend_from_slice(&(triples.len() as u32).to_le_bytes());
        for (context, next, count) in triples {
            out.extend_from_slice(&(context.len() as u32).to_le_bytes());
            for &t in context {
                out.extend_from_slice(&t.to_le_bytes());
            }
            out.extend_from_slice(&next.to_le_bytes());
            out.extend_from_slice(&count.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PredictorError> {
        let mut r = Cursor(bytes);
        if r.take(5)? != MODEL_MAGIC {
            return Err(PredictorError::BadMagic);
        }
        let order = r.take(1)?[0] as usize;
        if order == 0 {
            return Err(PredictorError::ZeroOrder);
        }
        let vocab_size = r.u32()? as usize;
        let n = r.u32()? as usize;
        if n > r.0.len() / 12 {
            return Err(PredictorError::InvalidModel("truncated triple table".into()));
        }
        let mut unigram = HashMap::new();
        let mut raw: HashMap<Vec<TokenId>, HashMap<TokenId, u32>> = HashMap::new();
        let mut previous: Option<(Vec<TokenId>, TokenId)> = None;
        for _ in 0..n {
            let len = r.u32()? as usize;
            if len > order {
                return Err(PredictorError::InvalidModel(format!(
                    "context of length {len} exceeds order {order}"
                )));
            }
            let context = (0..len).map(|_| r.u32()).collect::<Result<Vec<_>, _>>()?;
            let next = r.u32()?;
            let count = r.u32()?;
            if let Some(&id) = context.iter().chain([&next]).find(|&&t| t as usize >= vocab_size) {
                return Err(PredictorError::TokenOutOfRange { id, vocab_size });
            }
            if count == 0 {
                return Err(PredictorError::InvalidModel("zero count".into()));
            }
            let key = (context, next);
            if previous.as_ref().is_some_and(|p| *p >= key) {
                return Err(PredictorError::InvalidModel("triples not strictly sorted".into()));
            }
            if key.0.is_empty() {
                unigram.insert(next, count);
            } else {
                raw.entry(key.0.clone()).or_default().insert(next, count);
            }
            previous = Some(key);
        }
        if !r.0.is_empty() {
            return Err(PredictorError::InvalidModel("trailing bytes".into()));
        }
        let contexts = raw
            .into_iter()
            .map(|(c, counts)| (c, Successors::from_counts(counts)))
            .collect();
        Ok(Self::assemble(order, vocab_size, contexts, Successors::from_counts(unigram)))
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<(), PredictorError> {
        w.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self, PredictorError> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}

struct Cursor<'a>(&'a [u8]);

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], PredictorError> {
        if self.0.len() < n {
            return Err(PredictorError::InvalidModel("unexpected end of data".into()));
        }
        let (head, tail) = self.0.split_at(n);
        self.0 = tail;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32, PredictorError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

impl Predictor for MarkovModel {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn fingerprint(&self, config: &PredictorConfig) -> [u8; 32] {
        let mut hasher = Sha256::new();
        hasher.update(b"markov");
        hasher.update(self.digest);
        config.hash_into(&mut hasher);
        hasher.finalize().into()
    }

    fn predict(
        &self,
        context: &[TokenId],
        config: &PredictorConfig,
    ) -> Result<TokenId, PredictorError> {
        Ok(self.backoff(context).argmax(config.quant_bits()))
    }

    fn rank(
        &self,
        context: &[TokenId],
        config: &PredictorConfig,
    ) -> Result<Vec<TokenId>, PredictorError> {
        Ok(self
            .backoff(context)
            .full_ranking(config.quant_bits(), self.vocab_size))
    }

    fn rank_of(
        &self,
        context: &[TokenId],
        token: TokenId,
        config: &PredictorConfig,
    ) -> Result<usize, PredictorError> {
        if token as usize >= self.vocab_size {
            return Err(PredictorError::TokenOutOfRange {
                id: token,
                vocab_size: self.vocab_size,
            });
        }
        Ok(self.backoff(context).rank_of(token, config.quant_bits()))
    }

    fn token_at_rank(
        &self,
        context: &[TokenId],
        rank: usize,
        config: &PredictorConfig,
    ) -> Result<Option<TokenId>, PredictorError> {
        Ok(self
            .backoff(context)
            .token_at_rank(rank, config.quant_bits(), self.vocab_size))
    }

    fn context_horizon(&self) -> Option<usize> {
        Some(self.order)
    }
}
