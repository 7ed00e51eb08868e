//! Reversible tokenizers.
//!
//! Every vocabulary carries a byte plane: in a byte vocabulary it is the whole
//! vocabulary, in a word vocabulary ids `0..256` are single bytes and learned
//! multi-byte units follow. Encoding is greedy longest-match over learned
//! units with any unmatched byte emitted as its byte-plane id, so encoding is
//! total and there is no unknown token.

use std::collections::HashMap;
use std::io::{Read, Write};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::TokenId;

const VOCAB_MAGIC: &[u8; 5] = b"NTPV1";

/// Number of ids reserved for single bytes.
pub const BYTE_PLANE: usize = 256;

#[derive(Debug, Error)]
pub enum TokenizerError {
    #[error("token id {id} is out of range for a vocabulary of {vocab_size} entries")]
    OutOfRangeId { id: TokenId, vocab_size: usize },
    #[error("target vocabulary size {0} is below the minimum of 257")]
    TargetTooSmall(usize),
    #[error("not a vocabulary file (bad magic)")]
    BadMagic,
    #[error("invalid vocabulary: {0}")]
    Invalid(String),
    #[error("remote tokenizer: {0}")]
    Remote(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Anything that maps bytes to token ids and back, losslessly.
///
/// The fingerprint identifies the exact mapping; containers store it so a
/// file can only be decompressed with the tokenizer that produced it.
pub trait Tokenizer {
    fn vocab_size(&self) -> usize;

    fn tokenize(&self, text: &[u8]) -> Result<Vec<TokenId>, TokenizerError>;

    /// Tokenize `text` but stop after `max_tokens` ids. The ids produced must be
    /// a prefix of `tokenize(text)`.
    fn tokenize_prefix(
        &self,
        text: &[u8],
        max_tokens: usize,
    ) -> Result<Vec<TokenId>, TokenizerError> {
        let mut ids = self.tokenize(text)?;
        ids.truncate(max_tokens);
        Ok(ids)
    }

    fn detokenize(&self, ids: &[TokenId]) -> Result<Vec<u8>, TokenizerError>;

    fn fingerprint(&self) -> [u8; 32];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VocabKind {
    Byte,
    Word,
}

impl VocabKind {
    fn tag(self) -> u8 {
        match self {
            VocabKind::Byte => 0,
            VocabKind::Word => 1,
        }
    }
}

/// An ordered, duplicate-free list of byte strings indexed by dense ids.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    kind: VocabKind,
    entries: Vec<Vec<u8>>,
    /// Learned units (length >= 2) only; single bytes map to themselves.
    units: HashMap<Vec<u8>, TokenId>,
    /// Distinct lengths of learned units, longest first.
    unit_lengths: Vec<usize>,
    fingerprint: [u8; 32],
}

impl PartialEq for Vocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind && self.entries == other.entries
    }
}

impl Eq for Vocabulary {}

impl Vocabulary {
    /// The 256-entry identity vocabulary.
    pub fn bytes() -> Self {
        let entries = (0..=255u8).map(|b| vec![b]).collect();
        Self::build(VocabKind::Byte, entries)
    }

    /// Build a vocabulary from explicit entries, checking every invariant.
    pub fn from_entries(kind: VocabKind, entries: Vec<Vec<u8>>) -> Result<Self, TokenizerError> {
        if entries.len() < BYTE_PLANE {
            return Err(TokenizerError::Invalid(format!(
                "{} entries, the byte plane needs {BYTE_PLANE}",
                entries.len()
            )));
        }
        if kind == VocabKind::Byte && entries.len() != BYTE_PLANE {
            return Err(TokenizerError::Invalid(format!(
                "byte vocabulary with {} entries",
                entries.len()
            )));
        }
        if entries.len() > TokenId::MAX as usize {
            return Err(TokenizerError::Invalid("too many entries".into()));
        }
        for (i, entry) in entries.iter().take(BYTE_PLANE).enumerate() {
            if entry.as_slice() != [i as u8] {
                return Err(TokenizerError::Invalid(format!(
                    "entry {i} is not the single byte {i}"
                )));
            }
        }
        let mut seen = HashMap::with_capacity(entries.len() - BYTE_PLANE);
        for (i, entry) in entries.iter().enumerate().skip(BYTE_PLANE) {
            if entry.len() < 2 {
                return Err(TokenizerError::Invalid(format!(
                    "learned entry {i} is shorter than two bytes"
                )));
            }
            if entry.len() > u16::MAX as usize {
                return Err(TokenizerError::Invalid(format!("entry {i} is too long")));
            }
            if seen.insert(entry.as_slice(), i).is_some() {
                return Err(TokenizerError::Invalid(format!("duplicate entry {i}")));
            }
        }
        Ok(Self::build(kind, entries))
    }

    fn build(kind: VocabKind, entries: Vec<Vec<u8>>) -> Self {
        let mut units = HashMap::new();
        let mut unit_lengths = Vec::new();
        for (id, entry) in entries.iter().enumerate().skip(BYTE_PLANE) {
            units.insert(entry.clone(), id as TokenId);
            unit_lengths.push(entry.len());
        }
        unit_lengths.sort_unstable_by(|a, b| b.cmp(a));
        unit_lengths.dedup();
        let mut vocab = Self {
            kind,
            entries,
            units,
            unit_lengths,
            fingerprint: [0; 32],
        };
        vocab.fingerprint = Sha256::digest(vocab.to_bytes()).into();
        vocab
    }

    pub fn kind(&self) -> VocabKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[Vec<u8>] {
        &self.entries
    }

    pub fn entry(&self, id: TokenId) -> Option<&[u8]> {
        self.entries.get(id as usize).map(Vec::as_slice)
    }

    pub fn id_of(&self, unit: &[u8]) -> Option<TokenId> {
        match unit {
            [b] => Some(*b as TokenId),
            _ => self.units.get(unit).copied(),
        }
    }

    /// Greedy longest-match encoding with byte fallback.
    pub fn encode(&self, text: &[u8]) -> Vec<TokenId> {
        self.encode_limited(text, usize::MAX)
    }

    fn encode_limited(&self, text: &[u8], max_tokens: usize) -> Vec<TokenId> {
        let mut ids = Vec::with_capacity(text.len().min(max_tokens));
        let mut pos = 0;
        while pos < text.len() && ids.len() < max_tokens {
            let rest = &text[pos..];
            let matched = self
                .unit_lengths
                .iter()
                .filter(|&&len| len <= rest.len())
                .find_map(|&len| self.units.get(&rest[..len]).map(|&id| (id, len)));
            let (id, len) = matched.unwrap_or((rest[0] as TokenId, 1));
            ids.push(id);
            pos += len;
        }
        ids
    }

    pub fn decode(&self, ids: &[TokenId]) -> Result<Vec<u8>, TokenizerError> {
        let mut out = Vec::with_capacity(ids.len());
        for &id in ids {
            let entry = self.entry(id).ok_or(TokenizerError::OutOfRangeId {
                id,
                vocab_size: self.len(),
            })?;
            out.extend_from_slice(entry);
        }
        Ok(out)
    }

    /// Serialized form: magic, kind byte, u32 LE entry count, then each entry
    /// as u16 LE length followed by its bytes, in id order.
    pub fn to_bytes(&self) -> Vec<u8> {
        let body: usize = self.entries.iter().map(|e| e.len() + 2).sum();
        let mut out = Vec::with_capacity(VOCAB_MAGIC.len() + 5 + body);
        out.extend_from_slice(VOCAB_MAGIC);
        out.push(self.kind.tag());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for entry in &self.entries {
            out.extend_from_slice(&(entry.len() as u16).to_le_bytes());
            out.extend_from_slice(entry);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TokenizerError> {
        let mut reader = bytes;
        let mut magic = [0u8; 5];
        read_exact(&mut reader, &mut magic)?;
        if &magic != VOCAB_MAGIC {
            return Err(TokenizerError::BadMagic);
        }
        let mut tag = [0u8; 1];
        read_exact(&mut reader, &mut tag)?;
        let kind = match tag[0] {
            0 => VocabKind::Byte,
            1 => VocabKind::Word,
            other => return Err(TokenizerError::Invalid(format!("unknown kind {other}"))),
        };
        let mut count = [0u8; 4];
        read_exact(&mut reader, &mut count)?;
        let count = u32::from_le_bytes(count) as usize;
        // Each entry needs at least its length prefix.
        if count > reader.len() / 2 {
            return Err(TokenizerError::Invalid("truncated entry table".into()));
        }
        let mut entries = Vec::with_capacity(count);
        for _ in 0..count {
            let mut len = [0u8; 2];
            read_exact(&mut reader, &mut len)?;
            let mut entry = vec![0u8; u16::from_le_bytes(len) as usize];
            read_exact(&mut reader, &mut entry)?;
            entries.push(entry);
        }
        if !reader.is_empty() {
            return Err(TokenizerError::Invalid("trailing bytes".into()));
        }
        Self::from_entries(kind, entries)
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<(), TokenizerError> {
        w.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self, TokenizerError> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}

fn read_exact(reader: &mut &[u8], buf: &mut [u8]) -> Result<(), TokenizerError> {
    if reader.len() < buf.len() {
        return Err(TokenizerError::Invalid("unexpected end of data".into()));
    }
    let (head, tail) = reader.split_at(buf.len());
    buf.copy_from_slice(head);
    *reader = tail;
    Ok(())
}

impl Tokenizer for Vocabulary {
    fn vocab_size(&self) -> usize {
        self.len()
    }

    fn tokenize(&self, text: &[u8]) -> Result<Vec<TokenId>, TokenizerError> {
        Ok(self.encode(text))
    }

    fn tokenize_prefix(
        &self,
        text: &[u8],
        max_tokens: usize,
    ) -> Result<Vec<TokenId>, TokenizerError> {
        Ok(self.encode_limited(text, max_tokens))
    }

    fn detokenize(&self, ids: &[TokenId]) -> Result<Vec<u8>, TokenizerError> {
        self.decode(ids)
    }

    fn fingerprint(&self) -> [u8; 32] {
        self.fingerprint
    }
}

/// Learn a word vocabulary by repeated pair merging.
///
/// Starting from the byte plane, the most frequent adjacent pair of units
/// becomes a new unit until `target_size` entries exist or no pair occurs
/// twice. Ties go to the lexicographically smallest `(left, right)` pair.
pub fn train_word_vocab(corpus: &[u8], target_size: usize) -> Result<Vocabulary, TokenizerError> {
    if target_size <= BYTE_PLANE {
        return Err(TokenizerError::TargetTooSmall(target_size));
    }
    let mut entries: Vec<Vec<u8>> = (0..=255u8).map(|b| vec![b]).collect();
    let mut index: HashMap<Vec<u8>, TokenId> = HashMap::new();
    let mut seq: Vec<TokenId> = corpus.iter().map(|&b| b as TokenId).collect();
    let mut counts: HashMap<(TokenId, TokenId), u32> = HashMap::new();

    while entries.len() < target_size && seq.len() >= 2 {
        counts.clear();
        for pair in seq.windows(2) {
            *counts.entry((pair[0], pair[1])).or_insert(0) += 1;
        }
        let best = counts
            .iter()
            .filter(|(&(l, r), &n)| {
                n >= 2 && entries[l as usize].len() + entries[r as usize].len() <= u16::MAX as usize
            })
            .max_by(|(&a, &na), (&b, &nb)| {
                na.cmp(&nb).then_with(|| {
                    // Smaller pair wins, so it compares as greater.
                    let ka = (&entries[a.0 as usize], &entries[a.1 as usize]);
                    let kb = (&entries[b.0 as usize], &entries[b.1 as usize]);
                    kb.cmp(&ka)
                })
            })
            .map(|(&pair, _)| pair);
        let Some((left, right)) = best else { break };

        let mut unit = entries[left as usize].clone();
        unit.extend_from_slice(&entries[right as usize]);
        let merged = match index.get(&unit) {
            Some(&id) => id,
            None => {
                let id = entries.len() as TokenId;
                index.insert(unit.clone(), id);
                entries.push(unit);
                id
            }
        };

        let mut out = Vec::with_capacity(seq.len());
        let mut i = 0;
        while i < seq.len() {
            if i + 1 < seq.len() && seq[i] == left && seq[i + 1] == right {
                out.push(merged);
                i += 2;
            } else {
                out.push(seq[i]);
                i += 1;
            }
        }
        seq = out;
    }
    Ok(Vocabulary::build(VocabKind::Word, entries))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn byte_vocab_encodes_identity() {
        let v = Vocabulary::bytes();
        assert_eq!(v.encode(b"abc"), vec![97, 98, 99]);
        assert_eq!(v.encode(b""), Vec::<TokenId>::new());
        assert_eq!(v.encode("é".as_bytes()), vec![195, 169]);
        assert_eq!(v.decode(&[97, 98, 99]).unwrap(), b"abc");
        assert_eq!(v.decode(&[]).unwrap(), b"");
    }

    #[test]
    fn decode_rejects_out_of_range() {
        let v = Vocabulary::bytes();
        assert!(matches!(
            v.decode(&[1, 256]),
            Err(TokenizerError::OutOfRangeId { id: 256, vocab_size: 256 })
        ));
    }

    #[test]
    fn train_merges_most_frequent_pair() {
        // ab x3, ba x2
        let v = train_word_vocab(b"ababab", 258).unwrap();
        assert_eq!(v.entry(256), Some(&b"ab"[..]));
        // (a,a) x3 in "aaaa"
        let v = train_word_vocab(b"aaaa", 258).unwrap();
        assert_eq!(v.entry(256), Some(&b"aa"[..]));
    }

    #[test]
    fn train_stops_without_repeated_pairs() {
        let v = train_word_vocab(b"abcdefg", 300).unwrap();
        assert_eq!(v.len(), 256);
        assert_eq!(v.kind(), VocabKind::Word);
    }

    #[test]
    fn train_breaks_ties_lexicographically() {
        // "xy" and "ab" both occur twice, "ab" sorts first.
        let v = train_word_vocab(b"xyab xyab", 257).unwrap();
        assert_eq!(v.entry(256), Some(&b"ab"[..]));
    }

    #[test]
    fn train_rejects_small_target() {
        assert!(matches!(
            train_word_vocab(b"abab", 256),
            Err(TokenizerError::TargetTooSmall(256))
        ));
    }

    #[test]
    fn word_encoding_is_greedy_longest_match() {
        let mut entries: Vec<Vec<u8>> = (0..=255u8).map(|b| vec![b]).collect();
        entries.push(b"ab".to_vec());
        entries.push(b"abc".to_vec());
        let v = Vocabulary::from_entries(VocabKind::Word, entries).unwrap();
        assert_eq!(v.encode(b"abcabx"), vec![257, 256, b'x' as TokenId]);
        assert_eq!(v.tokenize_prefix(b"abcabx", 2).unwrap(), vec![257, 256]);
    }

    #[test]
    fn from_entries_checks_invariants() {
        let mut entries: Vec<Vec<u8>> = (0..=255u8).map(|b| vec![b]).collect();
        entries.push(b"ab".to_vec());
        assert!(Vocabulary::from_entries(VocabKind::Byte, entries.clone()).is_err());
        entries.push(b"ab".to_vec());
        assert!(Vocabulary::from_entries(VocabKind::Word, entries.clone()).is_err());
        entries.pop();
        entries.push(b"q".to_vec());
        assert!(Vocabulary::from_entries(VocabKind::Word, entries.clone()).is_err());
        entries.pop();
        entries.swap(0, 1);
        assert!(Vocabulary::from_entries(VocabKind::Word, entries).is_err());
    }

    #[test]
    fn file_format_layout() {
        let v = train_word_vocab(b"ababab", 257).unwrap();
        let bytes = v.to_bytes();
        assert_eq!(&bytes[..5], b"NTPV1");
        assert_eq!(bytes[5], 1);
        assert_eq!(&bytes[6..10], &257u32.to_le_bytes());
        assert_eq!(&bytes[10..13], &[1, 0, 0]);
        assert_eq!(&bytes[bytes.len() - 4..], &[2, 0, b'a', b'b']);
        assert_eq!(Vocabulary::from_bytes(&bytes).unwrap(), v);
        assert!(matches!(
            Vocabulary::from_bytes(b"NOPE1\0"),
            Err(TokenizerError::BadMagic)
        ));
        assert!(Vocabulary::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn fingerprint_tracks_content() {
        let a = train_word_vocab(b"ababab", 258).unwrap();
        let b = train_word_vocab(b"ababab", 258).unwrap();
        let c = train_word_vocab(b"ababab", 257).unwrap();
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_ne!(a.fingerprint(), c.fingerprint());
        assert_ne!(a.fingerprint(), Vocabulary::bytes().fingerprint());
    }

    proptest! {
        #[test]
        fn byte_ids_round_trip(ids in proptest::collection::vec(0u32..256, 0..200)) {
            let v = Vocabulary::bytes();
            let text = v.decode(&ids).unwrap();
            prop_assert_eq!(v.encode(&text), ids);
        }

        #[test]
        fn word_vocab_round_trips(
            corpus in proptest::collection::vec(prop_oneof![Just(b'a'), Just(b'b'), Just(b' '), any::<u8>()], 0..300),
            text in proptest::collection::vec(any::<u8>(), 0..300),
            extra in 1usize..40,
        ) {
            let v = train_word_vocab(&corpus, 256 + extra).unwrap();
            prop_assert_eq!(v.decode(&v.encode(&text)).unwrap(), text.clone());
            prop_assert_eq!(v.decode(&v.encode(&corpus)).unwrap(), corpus);
            prop_assert!(v.encode(&text).iter().all(|&id| (id as usize) < v.len()));
        }
    }
}
