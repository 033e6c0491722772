//! Exact modular arithmetic.
//!
//! Two regimes live here. [`FieldPrime`] is the prime field used for secret
//! sharing, and [`RingModulus`] is the power-of-two ring in which user vectors,
//! masks and the aggregate are summed. Vectors over the ring are [`RingVector`]s.

use std::fmt;

use thiserror::Error;

/// Errors raised by ring and field arithmetic.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RingError {
    #[error("{0} is not a valid field prime (must be prime and at least 3)")]
    NotPrime(u64),
    #[error("ring modulus must be 2^bits with 1 <= bits <= 64, got bits = {0}")]
    InvalidBits(u32),
    #[error("zero has no multiplicative inverse")]
    ZeroInverse,
    #[error("vector length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("entry {value} at index {index} is not below the ring modulus 2^{bits}")]
    EntryOutOfRange { index: usize, value: u64, bits: u32 },
    #[error("encoded vector has {got} bytes, expected {expected}")]
    EncodingLength { expected: usize, got: usize },
}

/// `(a + b) mod m` for `a, b < m`, exact for every 64-bit modulus.
pub fn mod_add(a: u64, b: u64, m: u64) -> u64 {
    debug_assert!(a < m && b < m);
    let (sum, overflow) = a.overflowing_add(b);
    if overflow || sum >= m {
        sum.wrapping_sub(m)
    } else {
        sum
    }
}

/// `(a - b) mod m` for `a, b < m`, result in `[0, m)`.
pub fn mod_sub(a: u64, b: u64, m: u64) -> u64 {
    debug_assert!(a < m && b < m);
    if a >= b {
        a - b
    } else {
        m - (b - a)
    }
}

/// `(a * b) mod p` through a 128-bit intermediate.
pub fn mod_mul(a: u64, b: u64, p: FieldPrime) -> u64 {
    debug_assert!(a < p.get() && b < p.get());
    mul_mod_u64(a, b, p.get())
}

/// Multiplicative inverse modulo `p`.
pub fn mod_inv(a: u64, p: FieldPrime) -> Result<u64, RingError> {
    let a = a % p.get();
    if a == 0 {
        return Err(RingError::ZeroInverse);
    }
    // Extended Euclid on signed 128-bit values; p < 2^64 so nothing overflows.
    let (mut r0, mut r1) = (p.get() as i128, a as i128);
    let (mut t0, mut t1) = (0i128, 1i128);
    while r1 != 0 {
        let q = r0 / r1;
        (r0, r1) = (r1, r0 - q * r1);
        (t0, t1) = (t1, t0 - q * t1);
    }
    debug_assert_eq!(r0, 1, "p is prime so gcd is 1");
    Ok(t0.rem_euclid(p.get() as i128) as u64)
}

#[inline]
fn mul_mod_u64(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn pow_mod_u64(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc = 1 % m;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod_u64(acc, base, m);
        }
        base = mul_mod_u64(base, base, m);
        exp >>= 1;
    }
    acc
}

/// Deterministic Miller-Rabin; this base set is exact for all 64-bit inputs.
pub(crate) fn is_prime_u64(n: u64) -> bool {
    const BASES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    if n < 2 {
        return false;
    }
    for &b in &BASES {
        if n.is_multiple_of(b) {
            return n == b;
        }
    }
    let s = (n - 1).trailing_zeros();
    let d = (n - 1) >> s;
    'witness: for &a in &BASES {
        let mut x = pow_mod_u64(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod_u64(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Prime modulus of the secret-sharing field.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct FieldPrime(u64);

impl FieldPrime {
    /// The Mersenne prime 2^61 - 1.
    pub const MERSENNE_61: FieldPrime = FieldPrime((1 << 61) - 1);

    pub fn new(p: u64) -> Result<Self, RingError> {
        if p >= 3 && is_prime_u64(p) {
            Ok(FieldPrime(p))
        } else {
            Err(RingError::NotPrime(p))
        }
    }

    pub fn get(self) -> u64 {
        self.0
    }

    pub fn add(self, a: u64, b: u64) -> u64 {
        mod_add(a, b, self.0)
    }

    pub fn sub(self, a: u64, b: u64) -> u64 {
        mod_sub(a, b, self.0)
    }

    pub fn mul(self, a: u64, b: u64) -> u64 {
        mod_mul(a, b, self)
    }

    pub fn inv(self, a: u64) -> Result<u64, RingError> {
        mod_inv(a, self)
    }
}

impl Default for FieldPrime {
    fn default() -> Self {
        Self::MERSENNE_61
    }
}

impl fmt::Debug for FieldPrime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FieldPrime({})", self.0)
    }
}

/// The data ring `Z_R` with `R = 2^bits`.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct RingModulus {
    bits: u32,
}

impl RingModulus {
    pub fn new(bits: u32) -> Result<Self, RingError> {
        if (1..=64).contains(&bits) {
            Ok(RingModulus { bits })
        } else {
            Err(RingError::InvalidBits(bits))
        }
    }

    pub fn bits(self) -> u32 {
        self.bits
    }

    /// `R - 1`, i.e. the largest residue.
    pub fn mask(self) -> u64 {
        if self.bits == 64 {
            u64::MAX
        } else {
            (1u64 << self.bits) - 1
        }
    }

    /// `R` itself, which does not fit in a `u64` when `bits = 64`.
    pub fn modulus(self) -> u128 {
        1u128 << self.bits
    }

    /// Width of one encoded entry: `ceil(bits / 8)` bytes.
    pub fn entry_bytes(self) -> usize {
        self.bits.div_ceil(8) as usize
    }

    pub fn contains(self, value: u64) -> bool {
        value & !self.mask() == 0
    }

    #[inline]
    pub fn add(self, a: u64, b: u64) -> u64 {
        a.wrapping_add(b) & self.mask()
    }

    #[inline]
    pub fn sub(self, a: u64, b: u64) -> u64 {
        a.wrapping_sub(b) & self.mask()
    }

    #[inline]
    pub fn neg(self, a: u64) -> u64 {
        a.wrapping_neg() & self.mask()
    }
}

impl Default for RingModulus {
    fn default() -> Self {
        RingModulus { bits: 32 }
    }
}

impl fmt::Debug for RingModulus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RingModulus(2^{})", self.bits)
    }
}

/// A fixed-length vector of residues modulo some [`RingModulus`].
///
/// The vector does not carry its modulus. Constructors that take a modulus
/// check every entry; the arithmetic functions assume their inputs came from
/// such a constructor under the same modulus.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct RingVector {
    entries: Vec<u64>,
}

impl RingVector {
    pub fn new(entries: Vec<u64>, ring: RingModulus) -> Result<Self, RingError> {
        if let Some((index, &value)) = entries.iter().enumerate().find(|(_, &v)| !ring.contains(v)) {
            return Err(RingError::EntryOutOfRange { index, value, bits: ring.bits() });
        }
        Ok(RingVector { entries })
    }

    /// Reduces every entry modulo `R` instead of rejecting out-of-range values.
    pub fn from_reduced(mut entries: Vec<u64>, ring: RingModulus) -> Self {
        let mask = ring.mask();
        entries.iter_mut().for_each(|e| *e &= mask);
        RingVector { entries }
    }

    pub fn zeros(len: usize) -> Self {
        RingVector { entries: vec![0; len] }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[u64] {
        &self.entries
    }

    pub(crate) fn entries_mut(&mut self) -> &mut [u64] {
        &mut self.entries
    }

    pub fn into_entries(self) -> Vec<u64> {
        self.entries
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(|&e| e == 0)
    }

    /// In-place `self += other`.
    pub fn add_assign(&mut self, other: &RingVector, ring: RingModulus) -> Result<(), RingError> {
        self.check_len(other)?;
        for (a, &b) in self.entries.iter_mut().zip(&other.entries) {
            *a = ring.add(*a, b);
        }
        Ok(())
    }

    /// In-place `self -= other`.
    pub fn sub_assign(&mut self, other: &RingVector, ring: RingModulus) -> Result<(), RingError> {
        self.check_len(other)?;
        for (a, &b) in self.entries.iter_mut().zip(&other.entries) {
            *a = ring.sub(*a, b);
        }
        Ok(())
    }

    fn check_len(&self, other: &RingVector) -> Result<(), RingError> {
        if self.len() != other.len() {
            return Err(RingError::LengthMismatch { left: self.len(), right: other.len() });
        }
        Ok(())
    }

    /// Entries in order, each as `ceil(bits/8)` little-endian bytes.
    pub fn encode(&self, ring: RingModulus) -> Vec<u8> {
        let width = ring.entry_bytes();
        let mut out = Vec::with_capacity(self.len() * width);
        for &e in &self.entries {
            out.extend_from_slice(&e.to_le_bytes()[..width]);
        }
        out
    }

    pub fn decode(bytes: &[u8], len: usize, ring: RingModulus) -> Result<Self, RingError> {
        let width = ring.entry_bytes();
        let expected = len * width;
        if bytes.len() != expected {
            return Err(RingError::EncodingLength { expected, got: bytes.len() });
        }
        let entries = bytes
            .chunks_exact(width)
            .map(|chunk| {
                let mut buf = [0u8; 8];
                buf[..width].copy_from_slice(chunk);
                u64::from_le_bytes(buf)
            })
            .collect();
        RingVector::new(entries, ring)
    }
}

/// Elementwise `u + v mod R`.
pub fn vec_add(u: &RingVector, v: &RingVector, ring: RingModulus) -> Result<RingVector, RingError> {
    let mut out = u.clone();
    out.add_assign(v, ring)?;
    Ok(out)
}

/// Elementwise `u - v mod R`.
pub fn vec_sub(u: &RingVector, v: &RingVector, ring: RingModulus) -> Result<RingVector, RingError> {
    let mut out = u.clone();
    out.sub_assign(v, ring)?;
    Ok(out)
}
