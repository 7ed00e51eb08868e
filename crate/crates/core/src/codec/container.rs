//! Container layout (all integers little-endian):
//!
//! | field                  | size |
//! |------------------------|------|
//! | magic `NTPZ1`          | 5    |
//! | version (1)            | 1    |
//! | codec mode             | 1    |
//! | window                 | 4    |
//! | quant bits             | 1    |
//! | literal prefix length  | 2    |
//! | tokenizer fingerprint  | 32   |
//! | predictor fingerprint  | 32   |
//! | DEFLATE'd body length  | 8    |
//! | DEFLATE'd body         | ...  |

use std::io::{Read, Write};

use flate2::read::DeflateDecoder;
use flate2::write::DeflateEncoder;
use flate2::Compression;

use super::{CodecError, CodecMode};
use crate::predictor::{PredictorConfig, QuantBits};

pub const MAGIC: &[u8; 5] = b"NTPZ1";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 5 + 1 + 1 + 4 + 1 + 2 + 32 + 32 + 8;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContainerHeader {
    pub mode: CodecMode,
    pub config: PredictorConfig,
    pub literal_prefix_len: u16,
    pub tokenizer_fingerprint: [u8; 32],
    pub predictor_fingerprint: [u8; 32],
}

/// A parsed container with its body already inflated.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Container {
    pub header: ContainerHeader,
    pub body: Vec<u8>,
}

impl Container {
    pub fn to_bytes(&self, deflate_level: u32) -> Vec<u8> {
        let packed = deflate(&self.body, deflate_level);
        let h = &self.header;
        let mut out = Vec::with_capacity(HEADER_LEN + packed.len());
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.push(h.mode.tag());
        out.extend_from_slice(&h.config.window().to_le_bytes());
        out.push(h.config.quant_bits().into());
        out.extend_from_slice(&h.literal_prefix_len.to_le_bytes());
        out.extend_from_slice(&h.tokenizer_fingerprint);
        out.extend_from_slice(&h.predictor_fingerprint);
        out.extend_from_slice(&(packed.len() as u64).to_le_bytes());
        out.extend_from_slice(&packed);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CodecError> {
        if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
            return Err(CodecError::BadMagic);
        }
        if bytes.len() < HEADER_LEN {
            return Err(CodecError::MalformedContainer("truncated header".into()));
        }
        if bytes[5] != VERSION {
            return Err(CodecError::BadVersion(bytes[5]));
        }
        let mode = CodecMode::from_tag(bytes[6])
            .ok_or_else(|| CodecError::MalformedContainer(format!("unknown mode {}", bytes[6])))?;
        let window = u32::from_le_bytes(bytes[7..11].try_into().unwrap());
        let quant = QuantBits::try_from(bytes[11])
            .map_err(|e| CodecError::MalformedContainer(e.to_string()))?;
        let config = PredictorConfig::new(window, quant)
            .map_err(|e| CodecError::MalformedContainer(e.to_string()))?;
        let literal_prefix_len = u16::from_le_bytes([bytes[12], bytes[13]]);
        let tokenizer_fingerprint = bytes[14..46].try_into().unwrap();
        let predictor_fingerprint = bytes[46..78].try_into().unwrap();
        let packed_len = u64::from_le_bytes(bytes[78..86].try_into().unwrap());
        let packed = &bytes[HEADER_LEN..];
        if packed.len() as u64 != packed_len {
            return Err(CodecError::MalformedContainer(format!(
                "body length field says {packed_len}, found {}",
                packed.len()
            )));
        }
        let body = inflate(packed)?;
        Ok(Self {
            header: ContainerHeader {
                mode,
                config,
                literal_prefix_len,
                tokenizer_fingerprint,
                predictor_fingerprint,
            },
            body,
        })
    }
}

/// Raw DEFLATE with no preset dictionary.
pub fn deflate(data: &[u8], level: u32) -> Vec<u8> {
    let mut enc = DeflateEncoder::new(Vec::new(), Compression::new(level.min(9)));
    enc.write_all(data).expect("in-memory write");
    enc.finish().expect("in-memory write")
}

pub fn inflate(data: &[u8]) -> Result<Vec<u8>, CodecError> {
    let mut out = Vec::new();
    DeflateDecoder::new(data)
        .read_to_end(&mut out)
        .map_err(|e| CodecError::MalformedContainer(format!("DEFLATE stream: {e}")))?;
    Ok(out)
}
