//! Naive reference implementation of the codec, used only as a test oracle.
//!
//! The predictor recounts n-gram statistics from the raw training stream on
//! every query, and the codec loops follow the compression and decompression
//! steps one by one with a plain list for the context. Nothing here calls
//! into the production codec or model.

pub struct NaivePredictor {
    pub training: Vec<u32>,
    pub order: usize,
    pub vocab_size: usize,
}

impl NaivePredictor {
    /// Follower counts of `suffix` in the training stream.
    fn followers(&self, suffix: &[u32]) -> Vec<u64> {
        let mut counts = vec![0u64; self.vocab_size];
        let n = suffix.len();
        if n == 0 {
            for &t in &self.training {
                counts[t as usize] += 1;
            }
            return counts;
        }
        for i in 0..self.training.len().saturating_sub(n) {
            if &self.training[i..i + n] == suffix {
                counts[self.training[i + n] as usize] += 1;
            }
        }
        counts
    }

    /// Fixed-point probabilities of the longest seen suffix.
    fn probabilities(&self, context: &[u32], bits: u32) -> Vec<u64> {
        let longest = context.len().min(self.order);
        let mut counts = vec![0u64; self.vocab_size];
        for len in (0..=longest).rev() {
            counts = self.followers(&context[context.len() - len..]);
            if counts.iter().any(|&c| c > 0) {
                break;
            }
        }
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return counts;
        }
        counts.iter().map(|&c| (c << bits) / total).collect()
    }

    pub fn ranking(&self, context: &[u32], bits: u32) -> Vec<u32> {
        let probs = self.probabilities(context, bits);
        let mut ids: Vec<u32> = (0..self.vocab_size as u32).collect();
        ids.sort_by(|&a, &b| probs[b as usize].cmp(&probs[a as usize]).then(a.cmp(&b)));
        ids
    }

    pub fn predict(&self, context: &[u32], bits: u32) -> u32 {
        let probs = self.probabilities(context, bits);
        let mut best = 0u32;
        for (id, &p) in probs.iter().enumerate() {
            if p > probs[best as usize] {
                best = id as u32;
            }
        }
        best
    }
}

fn append(list: &mut Vec<u32>, token: u32, window: usize) {
    list.push(token);
    if list.len() == window {
        list.remove(0);
    }
}

/// Counter-mode body text, step by step.
pub fn compress_body(tokens: &[u32], p: &NaivePredictor, window: usize, bits: u32, prefix: usize) -> String {
    let mut out: Vec<String> = Vec::new();
    let mut counter = 0u64;
    let mut list = Vec::new();
    for &t in tokens.iter().take(prefix) {
        out.push(format!("@{t}"));
        append(&mut list, t, window);
    }
    for &t in tokens.iter().skip(prefix) {
        if p.predict(&list, bits) == t {
            counter += 1;
        } else {
            out.push(counter.to_string());
            counter = 0;
            out.push(format!("@{t}"));
        }
        append(&mut list, t, window);
    }
    out.push(counter.to_string());
    out.join(" ")
}

/// Rank-mode body text, step by step.
pub fn compress_rank_body(tokens: &[u32], p: &NaivePredictor, window: usize, bits: u32, prefix: usize) -> String {
    let mut out: Vec<String> = Vec::new();
    let mut list = Vec::new();
    for &t in tokens.iter().take(prefix) {
        out.push(format!("@{t}"));
        append(&mut list, t, window);
    }
    for &t in tokens.iter().skip(prefix) {
        let r = p.ranking(&list, bits).iter().position(|&x| x == t).unwrap();
        out.push(r.to_string());
        append(&mut list, t, window);
    }
    out.join(" ")
}

/// Inverse of [`compress_body`].
pub fn decompress_body(body: &str, p: &NaivePredictor, window: usize, bits: u32, prefix: usize) -> Vec<u32> {
    let mut list = Vec::new();
    let mut tokens = Vec::new();
    let mut values = body.split(' ').filter(|v| !v.is_empty()).peekable();
    for _ in 0..prefix {
        match values.peek() {
            Some(v) if v.starts_with('@') => {
                let t: u32 = v[1..].parse().unwrap();
                tokens.push(t);
                append(&mut list, t, window);
                values.next();
            }
            _ => break,
        }
    }
    for v in values {
        if let Some(id) = v.strip_prefix('@') {
            let t: u32 = id.parse().unwrap();
            tokens.push(t);
            append(&mut list, t, window);
        } else {
            for _ in 0..v.parse::<u64>().unwrap() {
                let t = p.predict(&list, bits);
                tokens.push(t);
                append(&mut list, t, window);
            }
        }
    }
    tokens
}
