//! Byte encoding of every protocol message.
//!
//! Envelope: `[tag: u8][sender: u32 LE][payload length: u32 LE][payload]`.
//! Integers are little-endian throughout. Payloads:
//!
//! | tag | message           | payload                                                        |
//! |-----|-------------------|----------------------------------------------------------------|
//! | 1   | `AdvertiseKeys`   | `pk(mask) pk(seal)`                                            |
//! | 2   | `KeyDirectory`    | `count:u32`, then per entry `id:u32 pk(mask) pk(seal)`         |
//! | 3   | `EncryptedShares` | `count:u32`, then per entry `recipient:u32 box`                |
//! | 4   | `ShareDelivery`   | `count:u32`, then `box` each                                   |
//! | 5   | `MaskedInput`     | `vector`                                                       |
//! | 6   | `SurvivorList`    | `count:u32`, then `id:u32` each                                |
//! | 7   | `ShareReveal`     | `count:u32`, then per entry `kind:u8 chunks:u8 share`          |
//! | 8   | `AggregateOutput` | `vector`                                                       |
//!
//! where `pk = len:u8 bytes`, `box = sender:u32 recipient:u32 round:u8 len:u32 ciphertext`,
//! `vector = bits:u8 len:u32 entries` with `ceil(bits/8)` bytes per entry, and
//! `share = owner:u32 x:u32 y_0:u64 ... y_{c-1}:u64`. Map entries are written
//! in ascending key order and decoding rejects anything else, so each message
//! has exactly one encoding.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::crypto::{PublicKey, SealContext, SealedBox};
use crate::ring::{RingModulus, RingVector};
use crate::shamir::SecretShare;

pub const ENVELOPE_LEN: usize = 9;

/// Why a byte string failed to decode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MalformedKind {
    /// The buffer ended before a field that had to be there.
    Truncated { needed: usize, available: usize },
    UnknownTag(u8),
    /// The envelope's declared payload length disagrees with the buffer, or
    /// the payload has bytes left over after its last field.
    LengthMismatch { declared: usize, actual: usize },
    /// Structurally complete but semantically invalid content.
    Invalid(String),
}

impl fmt::Display for MalformedKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MalformedKind::Truncated { needed, available } => {
                write!(f, "truncated: needed {needed} bytes, {available} available")
            }
            MalformedKind::UnknownTag(tag) => write!(f, "unknown tag {tag:#04x}"),
            MalformedKind::LengthMismatch { declared, actual } => {
                write!(f, "length mismatch: declared {declared}, actual {actual}")
            }
            MalformedKind::Invalid(detail) => write!(f, "invalid content: {detail}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed message: {0}")]
pub struct MalformedMessage(pub MalformedKind);

impl MalformedMessage {
    pub fn kind(&self) -> &MalformedKind {
        &self.0
    }

    fn invalid(detail: impl Into<String>) -> Self {
        MalformedMessage(MalformedKind::Invalid(detail.into()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdvertiseKeys {
    pub mask_pk: PublicKey,
    pub seal_pk: PublicKey,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct KeyDirectory {
    pub entries: BTreeMap<u32, AdvertiseKeys>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EncryptedShares {
    pub boxes: BTreeMap<u32, SealedBox>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ShareDelivery {
    pub boxes: Vec<SealedBox>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskedInputMsg {
    pub ring: RingModulus,
    pub y: RingVector,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SurvivorList {
    pub ids: Vec<u32>,
}

/// Which secret a revealed share belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ShareKind {
    /// Share of a survivor's self-mask seed `b_u`.
    SelfMaskSeed = 0,
    /// Share of a dropped user's pairwise-mask secret key.
    MaskKey = 1,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RevealedShare {
    pub kind: ShareKind,
    pub share: SecretShare,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ShareReveal {
    pub entries: Vec<RevealedShare>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AggregateOutput {
    pub ring: RingModulus,
    pub z: RingVector,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RoundMessage {
    AdvertiseKeys(AdvertiseKeys),
    KeyDirectory(KeyDirectory),
    EncryptedShares(EncryptedShares),
    ShareDelivery(ShareDelivery),
    MaskedInput(MaskedInputMsg),
    SurvivorList(SurvivorList),
    ShareReveal(ShareReveal),
    AggregateOutput(AggregateOutput),
}

impl RoundMessage {
    pub fn tag(&self) -> u8 {
        match self {
            RoundMessage::AdvertiseKeys(_) => 1,
            RoundMessage::KeyDirectory(_) => 2,
            RoundMessage::EncryptedShares(_) => 3,
            RoundMessage::ShareDelivery(_) => 4,
            RoundMessage::MaskedInput(_) => 5,
            RoundMessage::SurvivorList(_) => 6,
            RoundMessage::ShareReveal(_) => 7,
            RoundMessage::AggregateOutput(_) => 8,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            RoundMessage::AdvertiseKeys(_) => "AdvertiseKeys",
            RoundMessage::KeyDirectory(_) => "KeyDirectory",
            RoundMessage::EncryptedShares(_) => "EncryptedShares",
            RoundMessage::ShareDelivery(_) => "ShareDelivery",
            RoundMessage::MaskedInput(_) => "MaskedInput",
            RoundMessage::SurvivorList(_) => "SurvivorList",
            RoundMessage::ShareReveal(_) => "ShareReveal",
            RoundMessage::AggregateOutput(_) => "AggregateOutput",
        }
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_count(out: &mut Vec<u8>, n: usize) {
    put_u32(out, u32::try_from(n).expect("collection larger than u32::MAX"));
}

fn put_pk(out: &mut Vec<u8>, pk: &PublicKey) {
    let bytes = pk.as_bytes();
    out.push(u8::try_from(bytes.len()).expect("public key longer than 255 bytes"));
    out.extend_from_slice(bytes);
}

fn put_box(out: &mut Vec<u8>, b: &SealedBox) {
    out.extend_from_slice(&b.ctx.encode());
    put_count(out, b.ciphertext.len());
    out.extend_from_slice(&b.ciphertext);
}

fn put_vector(out: &mut Vec<u8>, ring: RingModulus, v: &RingVector) {
    out.push(ring.bits() as u8);
    put_count(out, v.len());
    out.extend_from_slice(&v.encode(ring));
}

fn encode_payload(msg: &RoundMessage, out: &mut Vec<u8>) {
    match msg {
        RoundMessage::AdvertiseKeys(m) => {
            put_pk(out, &m.mask_pk);
            put_pk(out, &m.seal_pk);
        }
        RoundMessage::KeyDirectory(m) => {
            put_count(out, m.entries.len());
            for (&id, keys) in &m.entries {
                put_u32(out, id);
                put_pk(out, &keys.mask_pk);
                put_pk(out, &keys.seal_pk);
            }
        }
        RoundMessage::EncryptedShares(m) => {
            put_count(out, m.boxes.len());
            for (&recipient, b) in &m.boxes {
                put_u32(out, recipient);
                put_box(out, b);
            }
        }
        RoundMessage::ShareDelivery(m) => {
            put_count(out, m.boxes.len());
            m.boxes.iter().for_each(|b| put_box(out, b));
        }
        RoundMessage::MaskedInput(m) => put_vector(out, m.ring, &m.y),
        RoundMessage::SurvivorList(m) => {
            put_count(out, m.ids.len());
            m.ids.iter().for_each(|&id| put_u32(out, id));
        }
        RoundMessage::ShareReveal(m) => {
            put_count(out, m.entries.len());
            for e in &m.entries {
                out.push(e.kind as u8);
                out.push(u8::try_from(e.share.y.len()).expect("more than 255 chunks"));
                e.share.encode_into(out);
            }
        }
        RoundMessage::AggregateOutput(m) => put_vector(out, m.ring, &m.z),
    }
}

/// Serializes `msg` inside the envelope.
pub fn encode_message(msg: &RoundMessage, sender: u32) -> Vec<u8> {
    let mut payload = Vec::new();
    encode_payload(msg, &mut payload);
    let mut out = Vec::with_capacity(ENVELOPE_LEN + payload.len());
    out.push(msg.tag());
    put_u32(&mut out, sender);
    put_count(&mut out, payload.len());
    out.extend_from_slice(&payload);
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], MalformedMessage> {
        let available = self.buf.len() - self.pos;
        if available < n {
            return Err(MalformedMessage(MalformedKind::Truncated { needed: n, available }));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, MalformedMessage> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, MalformedMessage> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    /// A count whose elements each need at least `min_size` bytes; rejects
    /// counts the remaining buffer cannot possibly hold before allocating.
    fn count(&mut self, min_size: usize) -> Result<usize, MalformedMessage> {
        let n = self.u32()? as usize;
        let available = self.buf.len() - self.pos;
        let needed = n.saturating_mul(min_size);
        if needed > available {
            return Err(MalformedMessage(MalformedKind::Truncated { needed, available }));
        }
        Ok(n)
    }

    fn pk(&mut self) -> Result<PublicKey, MalformedMessage> {
        let len = self.u8()? as usize;
        Ok(PublicKey::from_bytes(self.take(len)?.to_vec()))
    }

    fn sealed_box(&mut self) -> Result<SealedBox, MalformedMessage> {
        let sender = self.u32()?;
        let recipient = self.u32()?;
        let round = self.u8()?;
        let len = self.u32()? as usize;
        let ciphertext = self.take(len)?.to_vec();
        Ok(SealedBox { ctx: SealContext { sender, recipient, round }, ciphertext })
    }

    fn vector(&mut self) -> Result<(RingModulus, RingVector), MalformedMessage> {
        let bits = self.u8()?;
        let ring = RingModulus::new(bits as u32).map_err(|e| MalformedMessage::invalid(e.to_string()))?;
        let len = self.count(ring.entry_bytes())?;
        let bytes = self.take(len * ring.entry_bytes())?;
        let v = RingVector::decode(bytes, len, ring).map_err(|e| MalformedMessage::invalid(e.to_string()))?;
        Ok((ring, v))
    }

    fn finish(&self) -> Result<(), MalformedMessage> {
        if self.pos != self.buf.len() {
            return Err(MalformedMessage(MalformedKind::LengthMismatch {
                declared: self.pos,
                actual: self.buf.len(),
            }));
        }
        Ok(())
    }
}

fn ascending_insert<V>(map: &mut BTreeMap<u32, V>, key: u32, value: V) -> Result<(), MalformedMessage> {
    if map.last_key_value().is_some_and(|(&last, _)| last >= key) {
        return Err(MalformedMessage::invalid(format!("map key {key} out of order or repeated")));
    }
    map.insert(key, value);
    Ok(())
}

fn decode_payload(tag: u8, payload: &[u8]) -> Result<RoundMessage, MalformedMessage> {
    let mut r = Reader::new(payload);
    let msg = match tag {
        1 => RoundMessage::AdvertiseKeys(AdvertiseKeys { mask_pk: r.pk()?, seal_pk: r.pk()? }),
        2 => {
            let n = r.count(6)?;
            let mut entries = BTreeMap::new();
            for _ in 0..n {
                let id = r.u32()?;
                let keys = AdvertiseKeys { mask_pk: r.pk()?, seal_pk: r.pk()? };
                ascending_insert(&mut entries, id, keys)?;
            }
            RoundMessage::KeyDirectory(KeyDirectory { entries })
        }
        3 => {
            let n = r.count(17)?;
            let mut boxes = BTreeMap::new();
            for _ in 0..n {
                let recipient = r.u32()?;
                ascending_insert(&mut boxes, recipient, r.sealed_box()?)?;
            }
            RoundMessage::EncryptedShares(EncryptedShares { boxes })
        }
        4 => {
            let n = r.count(13)?;
            let boxes = (0..n).map(|_| r.sealed_box()).collect::<Result<_, _>>()?;
            RoundMessage::ShareDelivery(ShareDelivery { boxes })
        }
        5 => {
            let (ring, y) = r.vector()?;
            RoundMessage::MaskedInput(MaskedInputMsg { ring, y })
        }
        6 => {
            let n = r.count(4)?;
            let ids = (0..n).map(|_| r.u32()).collect::<Result<_, _>>()?;
            RoundMessage::SurvivorList(SurvivorList { ids })
        }
        7 => {
            let n = r.count(10)?;
            let mut entries = Vec::with_capacity(n);
            for _ in 0..n {
                let kind = match r.u8()? {
                    0 => ShareKind::SelfMaskSeed,
                    1 => ShareKind::MaskKey,
                    other => return Err(MalformedMessage::invalid(format!("share kind {other}"))),
                };
                let chunks = r.u8()? as usize;
                let bytes = r.take(SecretShare::encoded_len(chunks))?;
                let share = SecretShare::decode(bytes, chunks).map_err(|e| MalformedMessage::invalid(e.to_string()))?;
                entries.push(RevealedShare { kind, share });
            }
            RoundMessage::ShareReveal(ShareReveal { entries })
        }
        8 => {
            let (ring, z) = r.vector()?;
            RoundMessage::AggregateOutput(AggregateOutput { ring, z })
        }
        other => return Err(MalformedMessage(MalformedKind::UnknownTag(other))),
    };
    r.finish()?;
    Ok(msg)
}

/// Inverse of [`encode_message`]: returns the message and its sender.
pub fn decode_message(bytes: &[u8]) -> Result<(RoundMessage, u32), MalformedMessage> {
    let mut r = Reader::new(bytes);
    let tag = r.u8()?;
    if !(1..=8).contains(&tag) {
        return Err(MalformedMessage(MalformedKind::UnknownTag(tag)));
    }
    let sender = r.u32()?;
    let declared = r.u32()? as usize;
    let actual = bytes.len() - ENVELOPE_LEN;
    if actual < declared {
        return Err(MalformedMessage(MalformedKind::Truncated { needed: declared, available: actual }));
    }
    if actual > declared {
        return Err(MalformedMessage(MalformedKind::LengthMismatch { declared, actual }));
    }
    let msg = decode_payload(tag, &bytes[ENVELOPE_LEN..])?;
    Ok((msg, sender))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pk(b: u8, len: usize) -> PublicKey {
        PublicKey::from_bytes(vec![b; len])
    }

    fn sealed(sender: u32, recipient: u32, len: usize) -> SealedBox {
        SealedBox { ctx: SealContext { sender, recipient, round: 1 }, ciphertext: vec![0xab; len] }
    }

    fn corpus() -> Vec<RoundMessage> {
        let r12 = RingModulus::new(12).unwrap();
        let keys = AdvertiseKeys { mask_pk: pk(1, 32), seal_pk: pk(2, 32) };
        vec![
            RoundMessage::AdvertiseKeys(keys.clone()),
            RoundMessage::KeyDirectory(KeyDirectory { entries: [(1, keys.clone()), (3, keys)].into() }),
            RoundMessage::KeyDirectory(KeyDirectory::default()),
            RoundMessage::EncryptedShares(EncryptedShares { boxes: [(1, sealed(2, 1, 40)), (2, sealed(2, 2, 40))].into() }),
            RoundMessage::ShareDelivery(ShareDelivery { boxes: vec![sealed(1, 2, 5), sealed(3, 2, 0)] }),
            RoundMessage::MaskedInput(MaskedInputMsg { ring: r12, y: RingVector::new(vec![1, 4095], r12).unwrap() }),
            RoundMessage::SurvivorList(SurvivorList { ids: vec![] }),
            RoundMessage::SurvivorList(SurvivorList { ids: vec![1, 2, 5] }),
            RoundMessage::ShareReveal(ShareReveal {
                entries: vec![
                    RevealedShare { kind: ShareKind::SelfMaskSeed, share: SecretShare { owner: 1, x: 2, y: vec![3, 4, 5] } },
                    RevealedShare { kind: ShareKind::MaskKey, share: SecretShare { owner: 4, x: 2, y: vec![9; 5] } },
                ],
            }),
            RoundMessage::AggregateOutput(AggregateOutput { ring: r12, z: RingVector::new(vec![7], r12).unwrap() }),
        ]
    }

    #[test]
    fn empty_survivor_list_layout() {
        let bytes = encode_message(&RoundMessage::SurvivorList(SurvivorList::default()), 0);
        assert_eq!(bytes, vec![6, 0, 0, 0, 0, 4, 0, 0, 0, 0, 0, 0, 0]);
    }

    #[test]
    fn corpus_round_trips_and_is_injective() {
        let corpus = corpus();
        let encoded: Vec<Vec<u8>> = corpus.iter().map(|m| encode_message(m, 7)).collect();
        for (m, bytes) in corpus.iter().zip(&encoded) {
            assert_eq!(decode_message(bytes).unwrap(), (m.clone(), 7));
        }
        for i in 0..encoded.len() {
            for j in 0..i {
                assert_ne!(encoded[i], encoded[j], "messages {i} and {j} collide");
            }
        }
        assert_ne!(encode_message(&corpus[0], 1), encode_message(&corpus[0], 2));
    }

    #[test]
    fn truncation_detected() {
        for m in corpus() {
            let bytes = encode_message(&m, 1);
            for cut in 0..bytes.len() {
                let err = decode_message(&bytes[..cut]).unwrap_err();
                assert!(matches!(err.kind(), MalformedKind::Truncated { .. }), "{} cut at {cut}: {err}", m.name());
            }
        }
    }

    #[test]
    fn unknown_tag_detected() {
        let mut bytes = encode_message(&RoundMessage::SurvivorList(SurvivorList::default()), 0);
        bytes[0] = 0xff;
        assert_eq!(decode_message(&bytes).unwrap_err().kind(), &MalformedKind::UnknownTag(0xff));
        assert_eq!(decode_message(&[0]).unwrap_err().kind(), &MalformedKind::UnknownTag(0));
    }

    #[test]
    fn length_mismatch_detected() {
        let mut bytes = encode_message(&RoundMessage::SurvivorList(SurvivorList { ids: vec![1] }), 0);
        bytes.push(0);
        assert_eq!(
            decode_message(&bytes).unwrap_err().kind(),
            &MalformedKind::LengthMismatch { declared: 8, actual: 9 }
        );
        // Payload length agrees with the buffer but the payload itself has a spare byte.
        let mut bytes = encode_message(&RoundMessage::SurvivorList(SurvivorList { ids: vec![1] }), 0);
        bytes.push(0);
        bytes[5] = 9;
        assert!(matches!(decode_message(&bytes).unwrap_err().kind(), MalformedKind::LengthMismatch { .. }));
    }

    #[test]
    fn non_canonical_maps_rejected() {
        let keys = AdvertiseKeys { mask_pk: pk(1, 8), seal_pk: pk(2, 8) };
        let msg = RoundMessage::KeyDirectory(KeyDirectory { entries: [(1, keys.clone()), (2, keys)].into() });
        let mut bytes = encode_message(&msg, 0);
        // Rewrite the second id to 1.
        let second = ENVELOPE_LEN + 4 + 4 + 18;
        bytes[second] = 1;
        assert!(matches!(decode_message(&bytes).unwrap_err().kind(), MalformedKind::Invalid(_)));
    }

    #[test]
    fn invalid_vector_entries_rejected() {
        let r4 = RingModulus::new(4).unwrap();
        let msg = RoundMessage::MaskedInput(MaskedInputMsg { ring: r4, y: RingVector::new(vec![15], r4).unwrap() });
        let mut bytes = encode_message(&msg, 0);
        *bytes.last_mut().unwrap() = 16;
        assert!(matches!(decode_message(&bytes).unwrap_err().kind(), MalformedKind::Invalid(_)));
        bytes[ENVELOPE_LEN] = 0;
        assert!(matches!(decode_message(&bytes).unwrap_err().kind(), MalformedKind::Invalid(_)));
    }

    fn arb_pk() -> impl Strategy<Value = PublicKey> {
        prop_oneof![any::<[u8; 8]>().prop_map(|b| b.to_vec()), any::<[u8; 32]>().prop_map(|b| b.to_vec())]
            .prop_map(PublicKey::from_bytes)
    }

    fn arb_box() -> impl Strategy<Value = SealedBox> {
        (any::<u32>(), any::<u32>(), any::<u8>(), proptest::collection::vec(any::<u8>(), 0..64)).prop_map(
            |(sender, recipient, round, ciphertext)| SealedBox { ctx: SealContext { sender, recipient, round }, ciphertext },
        )
    }

    fn arb_vector() -> impl Strategy<Value = (RingModulus, RingVector)> {
        (1u32..=64, proptest::collection::vec(any::<u64>(), 0..32)).prop_map(|(bits, raw)| {
            let ring = RingModulus::new(bits).unwrap();
            (ring, RingVector::from_reduced(raw, ring))
        })
    }

    fn arb_keys() -> impl Strategy<Value = AdvertiseKeys> {
        (arb_pk(), arb_pk()).prop_map(|(mask_pk, seal_pk)| AdvertiseKeys { mask_pk, seal_pk })
    }

    fn arb_message() -> impl Strategy<Value = RoundMessage> {
        let share = (any::<u32>(), any::<u32>(), proptest::collection::vec(any::<u64>(), 0..6))
            .prop_map(|(owner, x, y)| SecretShare { owner, x, y });
        let kind = prop_oneof![Just(ShareKind::SelfMaskSeed), Just(ShareKind::MaskKey)];
        prop_oneof![
            arb_keys().prop_map(RoundMessage::AdvertiseKeys),
            proptest::collection::btree_map(any::<u32>(), arb_keys(), 0..6)
                .prop_map(|entries| RoundMessage::KeyDirectory(KeyDirectory { entries })),
            proptest::collection::btree_map(any::<u32>(), arb_box(), 0..6)
                .prop_map(|boxes| RoundMessage::EncryptedShares(EncryptedShares { boxes })),
            proptest::collection::vec(arb_box(), 0..6).prop_map(|boxes| RoundMessage::ShareDelivery(ShareDelivery { boxes })),
            arb_vector().prop_map(|(ring, y)| RoundMessage::MaskedInput(MaskedInputMsg { ring, y })),
            proptest::collection::vec(any::<u32>(), 0..10).prop_map(|ids| RoundMessage::SurvivorList(SurvivorList { ids })),
            proptest::collection::vec((kind, share).prop_map(|(kind, share)| RevealedShare { kind, share }), 0..6)
                .prop_map(|entries| RoundMessage::ShareReveal(ShareReveal { entries })),
            arb_vector().prop_map(|(ring, z)| RoundMessage::AggregateOutput(AggregateOutput { ring, z })),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn encode_decode_identity(msg in arb_message(), sender in any::<u32>()) {
            let bytes = encode_message(&msg, sender);
            prop_assert_eq!(decode_message(&bytes).unwrap(), (msg, sender));
        }

        #[test]
        fn decode_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..128)) {
            let _ = decode_message(&bytes);
        }
    }
}
