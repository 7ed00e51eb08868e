//! Text form of a compressed body.
//!
//! Records are separated by single spaces. A counter is plain ASCII decimal,
//! a literal token id is `@` followed by ASCII decimal: `@12 0 @7 5`. In rank
//! mode the bare numbers carry ranks instead of run lengths.

use std::fmt::Write as _;

use super::CodecError;
use crate::TokenId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BodyRecord {
    /// Consecutive correct predictions (a rank, in rank mode).
    Counter(u64),
    /// A token id stored verbatim.
    Literal(TokenId),
}

pub fn serialize_body(records: &[BodyRecord]) -> Vec<u8> {
    let mut out = String::with_capacity(records.len() * 4);
    for (i, record) in records.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        match record {
            BodyRecord::Counter(n) => write!(out, "{n}"),
            BodyRecord::Literal(id) => write!(out, "@{id}"),
        }
        .expect("writing to a String cannot fail");
    }
    out.into_bytes()
}

pub fn parse_body(bytes: &[u8]) -> Result<Vec<BodyRecord>, CodecError> {
    if bytes.is_empty() {
        return Ok(Vec::new());
    }
    bytes
        .split(|&b| b == b' ')
        .enumerate()
        .map(|(i, field)| match field {
            [b'@', digits @ ..] => parse_decimal(digits)
                .and_then(|v| TokenId::try_from(v).ok())
                .map(BodyRecord::Literal),
            digits => parse_decimal(digits).map(BodyRecord::Counter),
        }
        .ok_or_else(|| {
            CodecError::MalformedBody(format!(
                "record {i}: {:?}",
                String::from_utf8_lossy(&field[..field.len().min(24)])
            ))
        }))
        .collect()
}

/// Canonical unsigned decimal: no sign, no leading zeros, fits in u64.
fn parse_decimal(digits: &[u8]) -> Option<u64> {
    match digits {
        [] => None,
        [b'0'] => Some(0),
        [b'0', ..] => None,
        _ => digits.iter().try_fold(0u64, |acc, &d| {
            if !d.is_ascii_digit() {
                return None;
            }
            acc.checked_mul(10)?.checked_add((d - b'0') as u64)
        }),
    }
}
