//! t-out-of-n Shamir secret sharing over a prime field.
//!
//! Byte-string secrets are split into 60-bit chunks, each of which is shared
//! with its own independent polynomial. A [`SecretShare`] carries one
//! evaluation point and the value of every chunk polynomial at that point.

use rand::Rng;
use thiserror::Error;

use crate::ring::{FieldPrime, RingError};

/// Bits of secret material packed into each field element.
pub const CHUNK_BITS: usize = 60;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ShamirError {
    #[error("invalid threshold t = {t} for n = {n} shares")]
    InvalidThreshold { t: usize, n: usize },
    #[error("need {needed} shares to reconstruct, got {got}")]
    InsufficientShares { needed: usize, got: usize },
    #[error("evaluation point {0} appears more than once")]
    DuplicateEvaluationPoint(u64),
    #[error("evaluation point must be a nonzero field element below p, got {0}")]
    InvalidEvaluationPoint(u64),
    #[error("shares disagree on chunk count ({expected} vs {got})")]
    ChunkCountMismatch { expected: usize, got: usize },
    #[error("shares belong to different owners ({0} and {1})")]
    MixedOwners(u32, u32),
    #[error("chunk value {0} is not a field element")]
    ValueOutOfField(u64),
    #[error("encoded share has {got} bytes, expected {expected}")]
    EncodingLength { expected: usize, got: usize },
    #[error(transparent)]
    Field(#[from] RingError),
}

/// A byte-string secret embedded as a sequence of field elements below 2^60.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChunkedSecret {
    chunks: Vec<u64>,
}

impl ChunkedSecret {
    /// Number of chunks needed for a secret of `len` bytes.
    pub fn chunk_count(len: usize) -> usize {
        (len * 8).div_ceil(CHUNK_BITS)
    }

    /// Packs bytes little-endian into a bit stream and cuts it into 60-bit chunks.
    pub fn from_bytes(bytes: &[u8]) -> Self {
        let mut chunks = vec![0u64; Self::chunk_count(bytes.len())];
        for (byte_index, &byte) in bytes.iter().enumerate() {
            for bit in 0..8 {
                if byte >> bit & 1 == 1 {
                    let pos = byte_index * 8 + bit;
                    chunks[pos / CHUNK_BITS] |= 1 << (pos % CHUNK_BITS);
                }
            }
        }
        ChunkedSecret { chunks }
    }

    /// Inverse of [`from_bytes`](Self::from_bytes) for a secret of `len` bytes.
    ///
    /// Bits beyond `len * 8` are ignored.
    pub fn to_bytes(&self, len: usize) -> Vec<u8> {
        let mut out = vec![0u8; len];
        for (pos_byte, out_byte) in out.iter_mut().enumerate() {
            for bit in 0..8 {
                let pos = pos_byte * 8 + bit;
                let chunk = self.chunks.get(pos / CHUNK_BITS).copied().unwrap_or(0);
                if chunk >> (pos % CHUNK_BITS) & 1 == 1 {
                    *out_byte |= 1 << bit;
                }
            }
        }
        out
    }

    pub fn from_chunks(chunks: Vec<u64>) -> Self {
        ChunkedSecret { chunks }
    }

    pub fn chunks(&self) -> &[u64] {
        &self.chunks
    }
}

/// One evaluation point of every chunk polynomial of `owner`'s secret.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SecretShare {
    pub owner: u32,
    pub x: u32,
    pub y: Vec<u64>,
}

impl SecretShare {
    /// Encoded size of a share with `chunks` chunk values.
    pub const fn encoded_len(chunks: usize) -> usize {
        8 + 8 * chunks
    }

    /// `owner` (u32 LE), `x` (u32 LE), then each chunk value as u64 LE.
    pub fn encode_into(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.owner.to_le_bytes());
        out.extend_from_slice(&self.x.to_le_bytes());
        for y in &self.y {
            out.extend_from_slice(&y.to_le_bytes());
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(Self::encoded_len(self.y.len()));
        self.encode_into(&mut out);
        out
    }

    pub fn decode(bytes: &[u8], chunks: usize) -> Result<Self, ShamirError> {
        let expected = Self::encoded_len(chunks);
        if bytes.len() != expected {
            return Err(ShamirError::EncodingLength { expected, got: bytes.len() });
        }
        let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
        let y = bytes[8..]
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(SecretShare { owner: word(0), x: word(4), y })
    }
}

/// Shares `secret` at `x = 1..=n`.
pub fn share<R: Rng + ?Sized>(
    secret: &ChunkedSecret,
    owner: u32,
    t: usize,
    n: usize,
    field: FieldPrime,
    rng: &mut R,
) -> Result<Vec<SecretShare>, ShamirError> {
    let xs: Vec<u32> = (1..=n as u32).collect();
    share_at(secret, owner, t, &xs, field, rng)
}

/// Shares `secret` at the given evaluation points, one share per point.
///
/// Each chunk gets a fresh polynomial of degree `t - 1` whose constant term is
/// the chunk and whose other coefficients are uniform in the field.
pub fn share_at<R: Rng + ?Sized>(
    secret: &ChunkedSecret,
    owner: u32,
    t: usize,
    xs: &[u32],
    field: FieldPrime,
    rng: &mut R,
) -> Result<Vec<SecretShare>, ShamirError> {
    share_with_coefficients(secret, owner, t, xs, field, || rng.gen_range(0..field.get()))
}

/// Like [`share_at`] but with the non-constant coefficients supplied by
/// `coefficient`, called `t - 1` times per chunk in order `a_1, ..., a_{t-1}`.
pub fn share_with_coefficients(
    secret: &ChunkedSecret,
    owner: u32,
    t: usize,
    xs: &[u32],
    field: FieldPrime,
    mut coefficient: impl FnMut() -> u64,
) -> Result<Vec<SecretShare>, ShamirError> {
    let n = xs.len();
    if t == 0 || t > n {
        return Err(ShamirError::InvalidThreshold { t, n });
    }
    let p = field.get();
    let mut seen = std::collections::BTreeSet::new();
    for &x in xs {
        if x == 0 || x as u64 >= p {
            return Err(ShamirError::InvalidEvaluationPoint(x as u64));
        }
        if !seen.insert(x) {
            return Err(ShamirError::DuplicateEvaluationPoint(x as u64));
        }
    }
    if let Some(&bad) = secret.chunks.iter().find(|&&c| c >= p) {
        return Err(ShamirError::ValueOutOfField(bad));
    }

    let mut shares: Vec<SecretShare> = xs
        .iter()
        .map(|&x| SecretShare { owner, x, y: Vec::with_capacity(secret.chunks.len()) })
        .collect();
    let mut coeffs = vec![0u64; t];
    for &chunk in &secret.chunks {
        coeffs[0] = chunk;
        for c in coeffs.iter_mut().skip(1) {
            *c = coefficient() % p;
        }
        for s in shares.iter_mut() {
            s.y.push(eval_poly(&coeffs, s.x as u64, field));
        }
    }
    Ok(shares)
}

/// Horner evaluation of `coeffs[0] + coeffs[1] x + ...`.
fn eval_poly(coeffs: &[u64], x: u64, field: FieldPrime) -> u64 {
    coeffs.iter().rev().fold(0, |acc, &c| field.add(field.mul(acc, x), c))
}

/// Weights `w_i` with `sum w_i f(x_i) = f(0)` for every polynomial of degree
/// below `xs.len()`.
pub fn lagrange_weights(xs: &[u64], field: FieldPrime) -> Result<Vec<u64>, ShamirError> {
    for (i, &x) in xs.iter().enumerate() {
        if x == 0 || x >= field.get() {
            return Err(ShamirError::InvalidEvaluationPoint(x));
        }
        if xs[..i].contains(&x) {
            return Err(ShamirError::DuplicateEvaluationPoint(x));
        }
    }
    xs.iter()
        .enumerate()
        .map(|(i, &xi)| {
            let (num, den) = xs.iter().enumerate().filter(|&(j, _)| j != i).fold(
                (1u64, 1u64),
                |(num, den), (_, &xj)| (field.mul(num, xj), field.mul(den, field.sub(xj, xi))),
            );
            Ok(field.mul(num, field.inv(den)?))
        })
        .collect()
}

/// Reconstructs a secret from at least `t` shares.
///
/// Shares are sorted by `x`; exact duplicates are dropped, while two different
/// shares at the same point are an error. Interpolation uses the `t` smallest
/// evaluation points so the result does not depend on arrival order.
pub fn reconstruct(shares: &[SecretShare], t: usize, field: FieldPrime) -> Result<ChunkedSecret, ShamirError> {
    if t == 0 {
        return Err(ShamirError::InvalidThreshold { t, n: shares.len() });
    }
    let mut sorted: Vec<&SecretShare> = shares.iter().collect();
    sorted.sort_by_key(|s| s.x);
    sorted.dedup_by(|a, b| a == b);
    for pair in sorted.windows(2) {
        if pair[0].x == pair[1].x {
            return Err(ShamirError::DuplicateEvaluationPoint(pair[0].x as u64));
        }
    }
    if sorted.len() < t {
        return Err(ShamirError::InsufficientShares { needed: t, got: sorted.len() });
    }
    let used = &sorted[..t];
    let first = used[0];
    for s in used {
        if s.owner != first.owner {
            return Err(ShamirError::MixedOwners(first.owner, s.owner));
        }
        if s.y.len() != first.y.len() {
            return Err(ShamirError::ChunkCountMismatch { expected: first.y.len(), got: s.y.len() });
        }
        if let Some(&bad) = s.y.iter().find(|&&y| y >= field.get()) {
            return Err(ShamirError::ValueOutOfField(bad));
        }
    }
    let xs: Vec<u64> = used.iter().map(|s| s.x as u64).collect();
    let weights = lagrange_weights(&xs, field)?;
    let chunks = (0..first.y.len())
        .map(|c| {
            used.iter()
                .zip(&weights)
                .fold(0, |acc, (s, &w)| field.add(acc, field.mul(w, s.y[c])))
        })
        .collect();
    Ok(ChunkedSecret { chunks })
}
