//! Per-layer secret payload and the model digest that binds hidden layers to
//! the output layer.
//!
//! Serialized layout (1024 bytes, bits packed MSB-first):
//!
//! ```text
//! secret_len (u16 BE, length of secret_bytes in bits)
//! secret_bytes = layer_index (u16 BE) ‖ user secret
//! model_digest (32 bytes)
//! hash = SHA-256(secret_len ‖ secret_bytes ‖ model_digest) (32 bytes)
//! zero padding
//! ```

use sha2::{Digest, Sha256};

use crate::container::{DType, ModelContainer};
use crate::error::{Error, Result};

pub const PAYLOAD_BITS: usize = 8192;
pub const PAYLOAD_BYTES: usize = PAYLOAD_BITS / 8;
pub const MAX_USER_SECRET: usize = 956;
const STAMP_LEN: usize = 2;
const MAX_SECRET_BYTES: usize = PAYLOAD_BYTES - 2 - 64;

/// SHA-256 over the class map and output-layer scalars.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ModelDigest(pub [u8; 32]);

impl ModelDigest {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        let bytes = hex::decode(s).ok()?;
        Some(Self(bytes.try_into().ok()?))
    }
}

/// Canonical digest input: one tagged entry per class label, then one per
/// output layer. An empty class map with no output layer serializes to the
/// empty byte string.
pub fn model_digest(container: &ModelContainer) -> ModelDigest {
    let mut hasher = Sha256::new();
    for label in &container.class_map {
        hasher.update([0x01]);
        hasher.update((label.len() as u32).to_be_bytes());
        hasher.update(label.as_bytes());
    }
    for layer in container.output_layers() {
        hasher.update([0x02]);
        hasher.update((layer.name.len() as u32).to_be_bytes());
        hasher.update(layer.name.as_bytes());
        hasher.update((layer.len() as u64).to_be_bytes());
        match layer.dtype {
            DType::Float32 => {
                hasher.update([4]);
                layer.data.iter().for_each(|&v| hasher.update((v as f32).to_le_bytes()));
            }
            DType::Float64 => {
                hasher.update([8]);
                layer.data.iter().for_each(|&v| hasher.update(v.to_le_bytes()));
            }
        }
    }
    ModelDigest(hasher.finalize().into())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SecretPayload {
    pub secret_bytes: Vec<u8>,
    pub model_digest: ModelDigest,
    pub hash: [u8; 32],
}

impl SecretPayload {
    pub fn new(layer_index: usize, user_secret: &[u8], model_digest: ModelDigest) -> Result<Self> {
        if user_secret.len() > MAX_USER_SECRET {
            return Err(Error::SecretTooLarge(user_secret.len()));
        }
        let mut secret_bytes = Vec::with_capacity(STAMP_LEN + user_secret.len());
        secret_bytes.extend_from_slice(&(layer_index as u16).to_be_bytes());
        secret_bytes.extend_from_slice(user_secret);
        let hash = hash_fields(&secret_bytes, &model_digest);
        Ok(Self { secret_bytes, model_digest, hash })
    }

    /// Layer index stamped into the secret.
    pub fn layer_stamp(&self) -> u16 {
        u16::from_be_bytes([self.secret_bytes[0], self.secret_bytes[1]])
    }

    pub fn user_secret(&self) -> &[u8] {
        &self.secret_bytes[STAMP_LEN..]
    }

    pub fn to_bytes(&self) -> [u8; PAYLOAD_BYTES] {
        let mut out = [0u8; PAYLOAD_BYTES];
        let n = self.secret_bytes.len();
        out[..2].copy_from_slice(&((n * 8) as u16).to_be_bytes());
        out[2..2 + n].copy_from_slice(&self.secret_bytes);
        out[2 + n..34 + n].copy_from_slice(&self.model_digest.0);
        out[34 + n..66 + n].copy_from_slice(&self.hash);
        out
    }

    pub fn to_bits(&self) -> Vec<u8> {
        bytes_to_bits(&self.to_bytes())
    }
}

fn hash_fields(secret_bytes: &[u8], digest: &ModelDigest) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(((secret_bytes.len() * 8) as u16).to_be_bytes());
    h.update(secret_bytes);
    h.update(digest.0);
    h.finalize().into()
}

/// Builds the payload for layer `layer_index` of `container`.
pub fn prepare_secret(container: &ModelContainer, layer_index: usize, user_secret: &[u8]) -> Result<SecretPayload> {
    SecretPayload::new(layer_index, user_secret, model_digest(container))
}

/// Result of parsing an extracted bitstring.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedPayload {
    pub secret_bytes: Vec<u8>,
    pub model_digest: ModelDigest,
    pub hash_match: bool,
}

/// Parses a payload and rechecks its hash.
///
/// A malformed length header or non-zero padding yields `hash_match = false`;
/// only a wrong bit count is an error.
pub fn parse_and_check(bits: &[u8]) -> Result<ParsedPayload> {
    if bits.len() != PAYLOAD_BITS {
        return Err(Error::WrongLength { expected: PAYLOAD_BITS, actual: bits.len() });
    }
    let bytes = bits_to_bytes(bits);
    let len_bits = u16::from_be_bytes([bytes[0], bytes[1]]) as usize;
    let n = len_bits / 8;
    if len_bits % 8 != 0 || n > MAX_SECRET_BYTES {
        return Ok(ParsedPayload { secret_bytes: Vec::new(), model_digest: ModelDigest([0; 32]), hash_match: false });
    }
    let secret_bytes = bytes[2..2 + n].to_vec();
    let model_digest = ModelDigest(bytes[2 + n..34 + n].try_into().unwrap());
    let embedded: [u8; 32] = bytes[34 + n..66 + n].try_into().unwrap();
    let pad_clean = bytes[66 + n..].iter().all(|&b| b == 0);
    let hash_match = pad_clean && hash_fields(&secret_bytes, &model_digest) == embedded;
    Ok(ParsedPayload { secret_bytes, model_digest, hash_match })
}

/// One bit per element, MSB of each byte first.
pub fn bytes_to_bits(bytes: &[u8]) -> Vec<u8> {
    bytes.iter().flat_map(|&b| (0..8).rev().map(move |i| (b >> i) & 1)).collect()
}

pub fn bits_to_bytes(bits: &[u8]) -> Vec<u8> {
    bits.chunks(8)
        .map(|c| c.iter().enumerate().fold(0u8, |acc, (i, &b)| acc | ((b & 1) << (7 - i))))
        .collect()
}

/// Fraction of positions where `a` and `b` differ.
pub fn bit_error_rate(a: &[u8], b: &[u8]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff = a.iter().zip(b).filter(|(x, y)| x != y).count();
    diff as f64 / a.len() as f64
}
