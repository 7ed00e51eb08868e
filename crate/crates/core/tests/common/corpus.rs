//! Synthetic text for tests: random words drawn from a random lexicon.

use rand::Rng;

pub fn lexicon(rng: &mut impl Rng, words: usize) -> Vec<String> {
    (0..words)
        .map(|_| {
            let len = rng.gen_range(2..9);
            (0..len).map(|_| (b'a' + rng.gen_range(0..26u8)) as char).collect()
        })
        .collect()
}

/// About `bytes` bytes of word salad, with occasional punctuation and newlines.
/// Word choice is skewed toward the front of the lexicon.
pub fn prose(rng: &mut impl Rng, lexicon: &[String], bytes: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(bytes + 16);
    while out.len() < bytes {
        let r: f64 = rng.gen();
        let idx = ((r * r) * lexicon.len() as f64) as usize;
        out.extend_from_slice(lexicon[idx.min(lexicon.len() - 1)].as_bytes());
        match rng.gen_range(0..20) {
            0 => out.extend_from_slice(b". "),
            1 => out.extend_from_slice(b",\n"),
            _ => out.push(b' '),
        }
    }
    out.truncate(bytes);
    out
}

pub fn random_bytes(rng: &mut impl Rng, len: usize) -> Vec<u8> {
    (0..len).map(|_| rng.gen()).collect()
}
