//! The four-round protocol: user and server state machines plus the wire format.
//!
//! | round | users send        | server replies                         |
//! |-------|-------------------|----------------------------------------|
//! | 0     | `AdvertiseKeys`   | `KeyDirectory` to everyone who advertised |
//! | 1     | `EncryptedShares` | one `ShareDelivery` per remaining user |
//! | 2     | `MaskedInput`     | `SurvivorList` to everyone who sent `y` |
//! | 3     | `ShareReveal`     | `AggregateOutput`                      |
//!
//! The server tracks the nested participant sets `U1 ⊇ U2 ⊇ U3` (with `U0`
//! the configured user ids) and aborts the moment any of them, or the set of
//! round-3 responders, falls below the threshold.

mod server;
mod user;
pub mod wire;

use thiserror::Error;

use crate::crypto::{CryptoError, DhGroup, GroupId, Seed};
use crate::masking::MaskingError;
use crate::ring::{FieldPrime, RingError, RingModulus};
use crate::shamir::{ChunkedSecret, ShamirError};

pub use server::{ServerOutput, ServerPhase, ServerState};
pub use user::{UserPhase, UserState};
pub use wire::{
    decode_message, encode_message, AdvertiseKeys, AggregateOutput, EncryptedShares, KeyDirectory, MalformedKind,
    MalformedMessage, MaskedInputMsg, RevealedShare, RoundMessage, ShareDelivery, ShareKind, ShareReveal, SurvivorList,
};

/// User ids run `1..=n`; the server speaks as id 0.
pub const SERVER_ID: u32 = 0;

/// Parameters shared by every party of one protocol instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProtocolConfig {
    pub n: usize,
    pub t: usize,
    /// Vector length `K`.
    pub len: usize,
    pub ring: RingModulus,
    pub field: FieldPrime,
    pub group: GroupId,
    pub master_seed: [u8; 16],
}

impl ProtocolConfig {
    /// A config with the default ring (2^32), field (2^61 - 1) and group.
    pub fn new(n: usize, t: usize, len: usize) -> Result<Self, ProtocolError> {
        let config = ProtocolConfig {
            n,
            t,
            len,
            ring: RingModulus::default(),
            field: FieldPrime::default(),
            group: GroupId::default(),
            master_seed: [0; 16],
        };
        config.validate()?;
        Ok(config)
    }

    /// `floor(n/2) + 1`.
    pub fn default_threshold(n: usize) -> usize {
        n / 2 + 1
    }

    pub fn with_ring(mut self, ring: RingModulus) -> Self {
        self.ring = ring;
        self
    }

    pub fn with_field(mut self, field: FieldPrime) -> Self {
        self.field = field;
        self
    }

    pub fn with_group(mut self, group: GroupId) -> Self {
        self.group = group;
        self
    }

    pub fn with_master_seed(mut self, seed: [u8; 16]) -> Self {
        self.master_seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        if self.n == 0 || self.n > u32::MAX as usize - 1 || self.n as u64 >= self.field.get() {
            return Err(ProtocolError::InvalidConfig(format!("unsupported user count n = {}", self.n)));
        }
        if self.t == 0 || self.t > self.n {
            return Err(ProtocolError::InvalidConfig(format!("threshold t = {} outside 1..={}", self.t, self.n)));
        }
        if self.len == 0 {
            return Err(ProtocolError::InvalidConfig("vector length K must be at least 1".into()));
        }
        Ok(())
    }

    pub fn user_ids(&self) -> impl Iterator<Item = u32> {
        1..=self.n as u32
    }

    pub fn dh_group(&self) -> &'static dyn DhGroup {
        self.group.group()
    }

    /// Chunks per share of a self-mask seed.
    pub fn seed_chunks(&self) -> usize {
        ChunkedSecret::chunk_count(Seed::LEN)
    }

    /// Chunks per share of a mask secret key.
    pub fn key_chunks(&self) -> usize {
        ChunkedSecret::chunk_count(self.dh_group().secret_key_len())
    }
}

/// Why a participant fell short in [`ProtocolError::InsufficientParticipants`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Shortfall {
    BelowThreshold { required: usize },
    /// The user's own id is absent.
    MissingSelf(u32),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("phase violation: expected {expected}, found {actual}")]
    PhaseViolation { expected: &'static str, actual: &'static str },
    #[error("user {user}, round {round}: insufficient participants ({shortfall:?}); present: {present:?}")]
    InsufficientParticipants { user: u32, round: u8, shortfall: Shortfall, present: Vec<u32> },
    #[error("round {round}: threshold not met ({got} participants, need {required})")]
    ThresholdNotMet { round: u8, required: usize, got: usize },
    #[error("share box from user {sender} failed authentication")]
    AuthenticationFailure { sender: u32 },
    #[error("could not reconstruct {kind:?} of user {owner}: {detail}")]
    ReconstructionFailure { owner: u32, kind: ShareKind, detail: String },
    #[error("round {round}: unexpected message from {sender}: {detail}")]
    UnexpectedMessage { round: u8, sender: u32, detail: String },
    #[error(transparent)]
    Malformed(#[from] MalformedMessage),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error(transparent)]
    Masking(#[from] MaskingError),
    #[error(transparent)]
    Shamir(#[from] ShamirError),
    #[error(transparent)]
    Ring(#[from] RingError),
}

impl ProtocolError {
    /// Errors after which the party stops participating.
    fn is_fatal(&self) -> bool {
        !matches!(self, ProtocolError::PhaseViolation { .. })
    }
}

/// Plaintext inside each round-1 sealed box: both shares destined for one recipient.
pub(crate) fn encode_share_pair(seed_share: &crate::shamir::SecretShare, key_share: &crate::shamir::SecretShare) -> Vec<u8> {
    let mut out = Vec::new();
    for s in [seed_share, key_share] {
        out.push(s.y.len() as u8);
        s.encode_into(&mut out);
    }
    out
}

pub(crate) fn decode_share_pair(
    bytes: &[u8],
) -> Result<(crate::shamir::SecretShare, crate::shamir::SecretShare), ShamirError> {
    use crate::shamir::SecretShare;
    let mut rest = bytes;
    let mut next = || -> Result<SecretShare, ShamirError> {
        let (&chunks, tail) = rest.split_first().ok_or(ShamirError::EncodingLength { expected: 1, got: 0 })?;
        let len = SecretShare::encoded_len(chunks as usize);
        if tail.len() < len {
            return Err(ShamirError::EncodingLength { expected: len, got: tail.len() });
        }
        let share = SecretShare::decode(&tail[..len], chunks as usize)?;
        rest = &tail[len..];
        Ok(share)
    };
    let seed_share = next()?;
    let key_share = next()?;
    if !rest.is_empty() {
        return Err(ShamirError::EncodingLength { expected: bytes.len() - rest.len(), got: bytes.len() });
    }
    Ok((seed_share, key_share))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(ProtocolConfig::new(3, 2, 1).is_ok());
        assert!(ProtocolConfig::new(3, 0, 1).is_err());
        assert!(ProtocolConfig::new(3, 4, 1).is_err());
        assert!(ProtocolConfig::new(3, 2, 0).is_err());
        assert!(ProtocolConfig::new(0, 0, 1).is_err());
        let small = ProtocolConfig::new(3, 2, 1).unwrap().with_field(FieldPrime::new(3).unwrap());
        assert!(small.validate().is_err());
    }

    #[test]
    fn default_threshold_is_majority() {
        assert_eq!(ProtocolConfig::default_threshold(1), 1);
        assert_eq!(ProtocolConfig::default_threshold(4), 3);
        assert_eq!(ProtocolConfig::default_threshold(5), 3);
    }

    #[test]
    fn chunk_counts() {
        let c = ProtocolConfig::new(3, 2, 1).unwrap();
        assert_eq!(c.seed_chunks(), 3);
        assert_eq!(c.key_chunks(), 5);
        assert_eq!(c.with_group(GroupId::Test).key_chunks(), 2);
    }

    #[test]
    fn share_pair_round_trip() {
        use crate::shamir::SecretShare;
        let a = SecretShare { owner: 1, x: 2, y: vec![1, 2, 3] };
        let b = SecretShare { owner: 1, x: 2, y: vec![4, 5] };
        let bytes = encode_share_pair(&a, &b);
        assert_eq!(decode_share_pair(&bytes).unwrap(), (a, b));
        assert!(decode_share_pair(&bytes[..bytes.len() - 1]).is_err());
        let mut long = bytes.clone();
        long.push(0);
        assert!(decode_share_pair(&long).is_err());
    }
}
