//! Key agreement, key derivation, share sealing and the mask PRG.
//!
//! Key agreement is behind the [`DhGroup`] trait with two instances:
//! X25519 for real use and a multiplicative group modulo 23 whose values can
//! be checked by hand. Everything else is fixed:
//!
//! * [`kdf`] is HMAC-SHA256 keyed by the agreed value, over a label and two
//!   party ids, truncated to a 16-byte [`Seed`].
//! * [`seal`]/[`open`] use AES-128-GCM; the nonce and associated data are the
//!   9-byte [`SealContext`].
//! * [`prg_expand`] runs AES-128-CTR keyed by the seed with an all-zero IV and
//!   takes `ceil(bits/8)` little-endian keystream bytes per residue, masked to
//!   `bits`.

use std::fmt;
use std::str::FromStr;

use aes::cipher::{KeyIvInit, StreamCipher};
use aes_gcm::aead::{Aead, KeyInit, Payload};
use aes_gcm::{Aes128Gcm, Nonce};
use hmac::{Hmac, Mac};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::Sha256;
use thiserror::Error;

use crate::ring::{RingModulus, RingVector};

type Aes128Ctr = ctr::Ctr128BE<aes::Aes128>;
type HmacSha256 = Hmac<Sha256>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CryptoError {
    #[error("public element is not a valid group element")]
    InvalidPublicElement,
    #[error("secret key is not valid for this group")]
    InvalidSecretKey,
    #[error("authentication failed while opening sealed box")]
    AuthenticationFailure,
    #[error("unknown group {0:?} (expected \"test\" or \"prod\")")]
    UnknownGroup(String),
}

/// Identifies which [`DhGroup`] a protocol instance runs over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum GroupId {
    /// Integers modulo 23 under multiplication, generator 5.
    Test,
    /// X25519.
    #[default]
    Prod,
}

impl GroupId {
    pub const ENV_VAR: &'static str = "SECAGG_GROUP";

    pub fn group(self) -> &'static dyn DhGroup {
        match self {
            GroupId::Test => &TEST_GROUP,
            GroupId::Prod => &X25519Group,
        }
    }

    /// Reads `SECAGG_GROUP`; unset means [`GroupId::Prod`].
    pub fn from_env() -> Result<Self, CryptoError> {
        match std::env::var(Self::ENV_VAR) {
            Ok(v) => v.parse(),
            Err(_) => Ok(GroupId::Prod),
        }
    }
}

impl FromStr for GroupId {
    type Err = CryptoError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "test" => Ok(GroupId::Test),
            "prod" => Ok(GroupId::Prod),
            _ => Err(CryptoError::UnknownGroup(s.to_string())),
        }
    }
}

impl fmt::Display for GroupId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GroupId::Test => "test",
            GroupId::Prod => "prod",
        })
    }
}

/// Encoded secret scalar.
#[derive(Clone, PartialEq, Eq)]
pub struct SecretKey(Vec<u8>);

impl SecretKey {
    pub fn from_bytes(bytes: Vec<u8>) -> Self {
        SecretKey(bytes)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }
}

impl fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SecretKey(..)")
    }
}

/// Encoded public group element.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PublicKey(Vec<u8>);

impl PublicKey {
    pub fn from_bytes(bytes: Vec<u8>) -> Self {
        PublicKey(bytes)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({})", hex::encode(&self.0))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyPair {
    pub sk: SecretKey,
    pub pk: PublicKey,
}

/// A Diffie-Hellman group.
pub trait DhGroup: Send + Sync {
    fn id(&self) -> GroupId;

    /// Fixed length of an encoded public key.
    fn public_key_len(&self) -> usize;

    /// Fixed length of an encoded secret key. This is what gets secret-shared.
    fn secret_key_len(&self) -> usize;

    fn keygen(&self, rng: &mut dyn RngCore) -> KeyPair;

    /// Base-point multiplication / exponentiation of the generator.
    fn public_key(&self, sk: &SecretKey) -> Result<PublicKey, CryptoError>;

    /// The shared group element, encoded.
    fn agree(&self, sk: &SecretKey, pk: &PublicKey) -> Result<Vec<u8>, CryptoError>;
}

/// A small prime-order multiplicative group `(Z/pZ)^*` with generator `g`.
///
/// Only useful for tests: discrete logs are trivial.
#[derive(Debug, Clone, Copy)]
pub struct ModpGroup {
    p: u64,
    g: u64,
}

pub const TEST_GROUP: ModpGroup = ModpGroup { p: 23, g: 5 };

impl ModpGroup {
    fn pow(&self, mut base: u64, mut exp: u64) -> u64 {
        let mut acc = 1u64;
        base %= self.p;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = acc * base % self.p;
            }
            base = base * base % self.p;
            exp >>= 1;
        }
        acc
    }

    fn decode(&self, bytes: &[u8]) -> Option<u64> {
        let arr: [u8; 8] = bytes.try_into().ok()?;
        Some(u64::from_le_bytes(arr))
    }

    fn scalar(&self, sk: &SecretKey) -> Result<u64, CryptoError> {
        match self.decode(sk.as_bytes()) {
            Some(s) if (1..self.p - 1).contains(&s) => Ok(s),
            _ => Err(CryptoError::InvalidSecretKey),
        }
    }
}

impl DhGroup for ModpGroup {
    fn id(&self) -> GroupId {
        GroupId::Test
    }

    fn public_key_len(&self) -> usize {
        8
    }

    fn secret_key_len(&self) -> usize {
        8
    }

    fn keygen(&self, rng: &mut dyn RngCore) -> KeyPair {
        let s = rng.gen_range(1..self.p - 1);
        let sk = SecretKey(s.to_le_bytes().to_vec());
        let pk = PublicKey(self.pow(self.g, s).to_le_bytes().to_vec());
        KeyPair { sk, pk }
    }

    fn public_key(&self, sk: &SecretKey) -> Result<PublicKey, CryptoError> {
        let s = self.scalar(sk)?;
        Ok(PublicKey(self.pow(self.g, s).to_le_bytes().to_vec()))
    }

    fn agree(&self, sk: &SecretKey, pk: &PublicKey) -> Result<Vec<u8>, CryptoError> {
        let s = self.scalar(sk)?;
        let element = match self.decode(pk.as_bytes()) {
            Some(e) if (1..self.p).contains(&e) => e,
            _ => return Err(CryptoError::InvalidPublicElement),
        };
        Ok(self.pow(element, s).to_le_bytes().to_vec())
    }
}

/// X25519 over Curve25519, 32-byte keys.
#[derive(Debug, Clone, Copy)]
pub struct X25519Group;

impl X25519Group {
    fn secret(sk: &SecretKey) -> Result<x25519_dalek::StaticSecret, CryptoError> {
        let arr: [u8; 32] = sk.as_bytes().try_into().map_err(|_| CryptoError::InvalidSecretKey)?;
        Ok(x25519_dalek::StaticSecret::from(arr))
    }
}

impl DhGroup for X25519Group {
    fn id(&self) -> GroupId {
        GroupId::Prod
    }

    fn public_key_len(&self) -> usize {
        32
    }

    fn secret_key_len(&self) -> usize {
        32
    }

    fn keygen(&self, rng: &mut dyn RngCore) -> KeyPair {
        let mut bytes = [0u8; 32];
        rng.fill_bytes(&mut bytes);
        let secret = x25519_dalek::StaticSecret::from(bytes);
        let pk = x25519_dalek::PublicKey::from(&secret);
        KeyPair { sk: SecretKey(bytes.to_vec()), pk: PublicKey(pk.as_bytes().to_vec()) }
    }

    fn public_key(&self, sk: &SecretKey) -> Result<PublicKey, CryptoError> {
        let secret = Self::secret(sk)?;
        Ok(PublicKey(x25519_dalek::PublicKey::from(&secret).as_bytes().to_vec()))
    }

    fn agree(&self, sk: &SecretKey, pk: &PublicKey) -> Result<Vec<u8>, CryptoError> {
        let secret = Self::secret(sk)?;
        let arr: [u8; 32] = pk.as_bytes().try_into().map_err(|_| CryptoError::InvalidPublicElement)?;
        let shared = secret.diffie_hellman(&x25519_dalek::PublicKey::from(arr));
        // Low-order points force an all-zero output.
        if !shared.was_contributory() {
            return Err(CryptoError::InvalidPublicElement);
        }
        Ok(shared.as_bytes().to_vec())
    }
}

/// A 16-byte seed for the PRG or the sealing cipher.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Seed(pub [u8; 16]);

impl Seed {
    pub const LEN: usize = 16;

    pub fn as_bytes(&self) -> &[u8; 16] {
        &self.0
    }
}

impl fmt::Debug for Seed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Seed({})", hex::encode(self.0))
    }
}

/// Domain-separation labels for [`kdf`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KdfLabel {
    PairwiseMask,
    SelfMask,
    Seal,
}

impl KdfLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            KdfLabel::PairwiseMask => "pairwise-mask",
            KdfLabel::SelfMask => "self-mask",
            KdfLabel::Seal => "seal",
        }
    }
}

fn hmac_context(key: &[u8], label: &str, a: u32, b: u32) -> [u8; 32] {
    let mut mac = <HmacSha256 as Mac>::new_from_slice(key).expect("HMAC accepts any key length");
    mac.update(label.as_bytes());
    mac.update(&[0]);
    mac.update(&a.to_le_bytes());
    mac.update(&b.to_le_bytes());
    mac.finalize().into_bytes().into()
}

/// `HMAC-SHA256(shared, label || 0x00 || a_le || b_le)[..16]`.
///
/// Callers that need a symmetric seed pass the ids in sorted order.
pub fn kdf(shared: &[u8], label: KdfLabel, a: u32, b: u32) -> Seed {
    let out = hmac_context(shared, label.as_str(), a, b);
    Seed(out[..16].try_into().unwrap())
}

/// Per-user randomness stream derived from the run's master seed.
pub fn user_rng(master_seed: &[u8; 16], user: u32) -> ChaCha20Rng {
    ChaCha20Rng::from_seed(hmac_context(master_seed, "user-rng", user, user))
}

/// What a sealed box is bound to: who sent it, to whom, in which round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SealContext {
    pub sender: u32,
    pub recipient: u32,
    pub round: u8,
}

impl SealContext {
    pub const ENCODED_LEN: usize = 9;

    pub fn encode(&self) -> [u8; 9] {
        let mut out = [0u8; 9];
        out[..4].copy_from_slice(&self.sender.to_le_bytes());
        out[4..8].copy_from_slice(&self.recipient.to_le_bytes());
        out[8] = self.round;
        out
    }

    fn nonce(&self) -> [u8; 12] {
        let mut nonce = [0u8; 12];
        nonce[..9].copy_from_slice(&self.encode());
        nonce
    }
}

/// AES-GCM ciphertext (with its 16-byte tag) plus the context it was sealed under.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SealedBox {
    pub ctx: SealContext,
    pub ciphertext: Vec<u8>,
}

impl SealedBox {
    pub const TAG_LEN: usize = 16;
}

pub fn seal(key: &Seed, ctx: SealContext, plaintext: &[u8]) -> SealedBox {
    let cipher = Aes128Gcm::new(key.as_bytes().into());
    let aad = ctx.encode();
    let ciphertext = cipher
        .encrypt(Nonce::from_slice(&ctx.nonce()), Payload { msg: plaintext, aad: &aad })
        .expect("AES-GCM encryption does not fail for in-memory buffers");
    SealedBox { ctx, ciphertext }
}

/// Opens `sealed` under the expected `ctx`; the box's own context is not trusted.
pub fn open(key: &Seed, ctx: SealContext, sealed: &SealedBox) -> Result<Vec<u8>, CryptoError> {
    let cipher = Aes128Gcm::new(key.as_bytes().into());
    let aad = ctx.encode();
    cipher
        .decrypt(Nonce::from_slice(&ctx.nonce()), Payload { msg: &sealed.ciphertext, aad: &aad })
        .map_err(|_| CryptoError::AuthenticationFailure)
}

/// Expands `seed` into `len` residues modulo `ring`.
pub fn prg_expand(seed: &Seed, len: usize, ring: RingModulus) -> RingVector {
    let mut out = RingVector::zeros(len);
    prg_accumulate(seed, false, &mut out, ring);
    out
}

/// Adds (or with `negate`, subtracts) `prg_expand(seed, acc.len(), ring)`
/// into `acc` without materializing the mask.
pub fn prg_accumulate(seed: &Seed, negate: bool, acc: &mut RingVector, ring: RingModulus) {
    let width = ring.entry_bytes();
    let mask = ring.mask();
    let mut cipher = Aes128Ctr::new(seed.as_bytes().into(), &[0u8; 16].into());
    const ENTRIES_PER_BLOCK: usize = 1024;
    let mut buf = vec![0u8; ENTRIES_PER_BLOCK * width];
    let entries = acc.entries_mut();
    for block in entries.chunks_mut(ENTRIES_PER_BLOCK) {
        let stream = &mut buf[..block.len() * width];
        stream.fill(0);
        cipher.apply_keystream(stream);
        for (slot, bytes) in block.iter_mut().zip(stream.chunks_exact(width)) {
            let mut word = [0u8; 8];
            word[..width].copy_from_slice(bytes);
            let r = u64::from_le_bytes(word) & mask;
            *slot = if negate { slot.wrapping_sub(r) } else { slot.wrapping_add(r) } & mask;
        }
    }
}
