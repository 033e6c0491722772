use std::collections::{BTreeMap, BTreeSet};

use super::wire::{
    AggregateOutput, KeyDirectory, RoundMessage, ShareDelivery, ShareKind, ShareReveal, SurvivorList,
};
use super::{ProtocolConfig, ProtocolError};
use crate::crypto::{PublicKey, SecretKey, Seed};
use crate::masking;
use crate::ring::RingVector;
use crate::shamir::{self, SecretShare};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ServerPhase {
    AwaitKeys,
    AwaitShares,
    AwaitMaskedInputs,
    AwaitReveals,
    Done,
    Aborted,
}

impl ServerPhase {
    pub fn name(self) -> &'static str {
        match self {
            ServerPhase::AwaitKeys => "AwaitKeys",
            ServerPhase::AwaitShares => "AwaitShares",
            ServerPhase::AwaitMaskedInputs => "AwaitMaskedInputs",
            ServerPhase::AwaitReveals => "AwaitReveals",
            ServerPhase::Done => "Done",
            ServerPhase::Aborted => "Aborted",
        }
    }

    fn round(self) -> Option<u8> {
        match self {
            ServerPhase::AwaitKeys => Some(0),
            ServerPhase::AwaitShares => Some(1),
            ServerPhase::AwaitMaskedInputs => Some(2),
            ServerPhase::AwaitReveals => Some(3),
            ServerPhase::Done | ServerPhase::Aborted => None,
        }
    }
}

/// What the server sends at the end of a round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ServerOutput {
    /// The same message to every listed recipient.
    Broadcast { recipients: Vec<u32>, message: RoundMessage },
    /// A distinct message per recipient.
    Addressed(BTreeMap<u32, RoundMessage>),
    /// The unmasked sum; the end of the protocol.
    Aggregate(AggregateOutput),
}

/// The server's view: participant sets, routed shares and the running sum.
#[derive(Debug)]
pub struct ServerState {
    config: ProtocolConfig,
    phase: ServerPhase,
    /// `U0` through `U3`.
    participants: [BTreeSet<u32>; 4],
    /// Round-3 responders.
    revealers: BTreeSet<u32>,
    directory: KeyDirectory,
    sum_y: RingVector,
}

impl ServerState {
    pub fn new(config: ProtocolConfig) -> Self {
        let u0 = config.user_ids().collect();
        let len = config.len;
        ServerState {
            config,
            phase: ServerPhase::AwaitKeys,
            participants: [u0, BTreeSet::new(), BTreeSet::new(), BTreeSet::new()],
            revealers: BTreeSet::new(),
            directory: KeyDirectory::default(),
            sum_y: RingVector::zeros(len),
        }
    }

    pub fn phase(&self) -> ServerPhase {
        self.phase
    }

    /// Participant set `U_i` for `i` in `0..4`.
    pub fn participants(&self, i: usize) -> &BTreeSet<u32> {
        &self.participants[i]
    }

    pub fn revealers(&self) -> &BTreeSet<u32> {
        &self.revealers
    }

    /// Processes every message collected during `round` and produces the
    /// server's reply.
    ///
    /// A participant set falling below `t` aborts the protocol: the error is
    /// returned, the phase becomes `Aborted`, and no output is ever produced.
    pub fn run_round(&mut self, round: u8, inbox: Vec<(u32, RoundMessage)>) -> Result<ServerOutput, ProtocolError> {
        let expected = self.phase.round();
        if expected != Some(round) {
            return Err(ProtocolError::PhaseViolation {
                expected: self.phase.name(),
                actual: match round {
                    0 => "round 0",
                    1 => "round 1",
                    2 => "round 2",
                    3 => "round 3",
                    _ => "unknown round",
                },
            });
        }
        let result = match round {
            0 => self.round0(inbox),
            1 => self.round1(inbox),
            2 => self.round2(inbox),
            _ => self.round3(inbox),
        };
        match &result {
            Ok(_) => {
                self.assert_nested();
                self.phase = match round {
                    0 => ServerPhase::AwaitShares,
                    1 => ServerPhase::AwaitMaskedInputs,
                    2 => ServerPhase::AwaitReveals,
                    _ => ServerPhase::Done,
                };
            }
            Err(_) => self.phase = ServerPhase::Aborted,
        }
        result
    }

    fn assert_nested(&self) {
        for i in 1..4 {
            assert!(
                self.participants[i].is_subset(&self.participants[i - 1]),
                "participant sets must be nested: U{i} ⊄ U{}",
                i - 1
            );
        }
        assert!(self.revealers.is_subset(&self.participants[3]));
    }

    /// Accepts one message per sender, each from the previous round's set.
    fn admit<T>(
        &self,
        round: u8,
        inbox: Vec<(u32, RoundMessage)>,
        eligible: &BTreeSet<u32>,
        mut extract: impl FnMut(u32, RoundMessage) -> Result<T, ProtocolError>,
    ) -> Result<BTreeMap<u32, T>, ProtocolError> {
        let mut out = BTreeMap::new();
        for (sender, msg) in inbox {
            if !eligible.contains(&sender) {
                return Err(ProtocolError::UnexpectedMessage {
                    round,
                    sender,
                    detail: "sender is not a current participant".into(),
                });
            }
            if out.contains_key(&sender) {
                return Err(ProtocolError::UnexpectedMessage { round, sender, detail: "duplicate message".into() });
            }
            out.insert(sender, extract(sender, msg)?);
        }
        if out.len() < self.config.t {
            return Err(ProtocolError::ThresholdNotMet { round, required: self.config.t, got: out.len() });
        }
        Ok(out)
    }

    fn wrong_variant(round: u8, sender: u32, msg: &RoundMessage) -> ProtocolError {
        ProtocolError::UnexpectedMessage { round, sender, detail: format!("unexpected {}", msg.name()) }
    }

    fn round0(&mut self, inbox: Vec<(u32, RoundMessage)>) -> Result<ServerOutput, ProtocolError> {
        let pk_len = self.config.dh_group().public_key_len();
        let eligible = self.participants[0].clone();
        let keys = self.admit(0, inbox, &eligible, |sender, msg| match msg {
            RoundMessage::AdvertiseKeys(k) => {
                if k.mask_pk.as_bytes().len() != pk_len || k.seal_pk.as_bytes().len() != pk_len {
                    return Err(ProtocolError::UnexpectedMessage {
                        round: 0,
                        sender,
                        detail: format!("public keys must be {pk_len} bytes"),
                    });
                }
                Ok(k)
            }
            other => Err(Self::wrong_variant(0, sender, &other)),
        })?;
        self.participants[1] = keys.keys().copied().collect();
        self.directory = KeyDirectory { entries: keys };
        Ok(ServerOutput::Broadcast {
            recipients: self.participants[1].iter().copied().collect(),
            message: RoundMessage::KeyDirectory(self.directory.clone()),
        })
    }

    fn round1(&mut self, inbox: Vec<(u32, RoundMessage)>) -> Result<ServerOutput, ProtocolError> {
        let u1 = self.participants[1].clone();
        let shares = self.admit(1, inbox, &u1, |sender, msg| match msg {
            RoundMessage::EncryptedShares(m) => {
                let addressed: BTreeSet<u32> = m.boxes.keys().copied().collect();
                if addressed != u1 {
                    return Err(ProtocolError::UnexpectedMessage {
                        round: 1,
                        sender,
                        detail: "share boxes must address exactly the key directory".into(),
                    });
                }
                for (&recipient, b) in &m.boxes {
                    if b.ctx.sender != sender || b.ctx.recipient != recipient || b.ctx.round != 1 {
                        return Err(ProtocolError::UnexpectedMessage {
                            round: 1,
                            sender,
                            detail: format!("box for {recipient} carries context {:?}", b.ctx),
                        });
                    }
                }
                Ok(m)
            }
            other => Err(Self::wrong_variant(1, sender, &other)),
        })?;
        self.participants[2] = shares.keys().copied().collect();
        let mut deliveries: BTreeMap<u32, ShareDelivery> =
            self.participants[2].iter().map(|&v| (v, ShareDelivery::default())).collect();
        for mut m in shares.into_values() {
            for (recipient, delivery) in deliveries.iter_mut() {
                let b = m.boxes.remove(recipient).expect("checked above");
                delivery.boxes.push(b);
            }
        }
        Ok(ServerOutput::Addressed(
            deliveries.into_iter().map(|(v, d)| (v, RoundMessage::ShareDelivery(d))).collect(),
        ))
    }

    fn round2(&mut self, inbox: Vec<(u32, RoundMessage)>) -> Result<ServerOutput, ProtocolError> {
        let (ring, len) = (self.config.ring, self.config.len);
        let u2 = self.participants[2].clone();
        let inputs = self.admit(2, inbox, &u2, |sender, msg| match msg {
            RoundMessage::MaskedInput(m) if m.ring == ring && m.y.len() == len => Ok(m.y),
            RoundMessage::MaskedInput(_) => Err(ProtocolError::UnexpectedMessage {
                round: 2,
                sender,
                detail: "masked input has the wrong modulus or length".into(),
            }),
            other => Err(Self::wrong_variant(2, sender, &other)),
        })?;
        self.participants[3] = inputs.keys().copied().collect();
        let mut sum = RingVector::zeros(len);
        for y in inputs.values() {
            sum.add_assign(y, ring)?;
        }
        self.sum_y = sum;
        let ids: Vec<u32> = self.participants[3].iter().copied().collect();
        Ok(ServerOutput::Broadcast {
            recipients: ids.clone(),
            message: RoundMessage::SurvivorList(SurvivorList { ids }),
        })
    }

    fn round3(&mut self, inbox: Vec<(u32, RoundMessage)>) -> Result<ServerOutput, ProtocolError> {
        let u3 = self.participants[3].clone();
        let reveals: BTreeMap<u32, ShareReveal> = self.admit(3, inbox, &u3, |sender, msg| match msg {
            RoundMessage::ShareReveal(r) => Ok(r),
            other => Err(Self::wrong_variant(3, sender, &other)),
        })?;
        self.revealers = reveals.keys().copied().collect();

        let dropped: BTreeSet<u32> = self.participants[2].difference(&u3).copied().collect();
        let mut seed_shares: BTreeMap<u32, Vec<SecretShare>> = u3.iter().map(|&u| (u, Vec::new())).collect();
        let mut key_shares: BTreeMap<u32, Vec<SecretShare>> = dropped.iter().map(|&u| (u, Vec::new())).collect();
        for (&revealer, reveal) in &reveals {
            for entry in &reveal.entries {
                let owner = entry.share.owner;
                let bucket = match entry.kind {
                    ShareKind::SelfMaskSeed => seed_shares.get_mut(&owner),
                    ShareKind::MaskKey => key_shares.get_mut(&owner),
                };
                let bucket = bucket.ok_or_else(|| ProtocolError::UnexpectedMessage {
                    round: 3,
                    sender: revealer,
                    detail: format!("{:?} share of user {owner} was not requested", entry.kind),
                })?;
                if entry.share.x != revealer {
                    return Err(ProtocolError::UnexpectedMessage {
                        round: 3,
                        sender: revealer,
                        detail: format!("share evaluated at {} instead of {revealer}", entry.share.x),
                    });
                }
                bucket.push(entry.share.clone());
            }
        }

        let (ring, len, t, field) = (self.config.ring, self.config.len, self.config.t, self.config.field);
        let failure = |owner: u32, kind: ShareKind, detail: String| ProtocolError::ReconstructionFailure { owner, kind, detail };

        let mut self_masks = Vec::with_capacity(seed_shares.len());
        for (&owner, shares) in &seed_shares {
            let secret = shamir::reconstruct(shares, t, field)
                .map_err(|e| failure(owner, ShareKind::SelfMaskSeed, e.to_string()))?;
            let b = Seed(secret.to_bytes(Seed::LEN).try_into().unwrap());
            self_masks.push(masking::self_mask(&b, len, ring));
        }

        let group = self.config.dh_group();
        let survivors: Vec<u32> = u3.iter().copied().collect();
        let survivor_pks: BTreeMap<u32, PublicKey> =
            survivors.iter().map(|v| (*v, self.directory.entries[v].mask_pk.clone())).collect();
        let mut dropped_masks = Vec::with_capacity(key_shares.len());
        for (&owner, shares) in &key_shares {
            let secret = shamir::reconstruct(shares, t, field)
                .map_err(|e| failure(owner, ShareKind::MaskKey, e.to_string()))?;
            let sk = SecretKey::from_bytes(secret.to_bytes(group.secret_key_len()));
            let pk = group.public_key(&sk).map_err(|e| failure(owner, ShareKind::MaskKey, e.to_string()))?;
            if pk != self.directory.entries[&owner].mask_pk {
                return Err(failure(owner, ShareKind::MaskKey, "reconstructed key does not match directory".into()));
            }
            dropped_masks.push(masking::dropped_user_mask(group, owner, &sk, &survivor_pks, &survivors, len, ring)?);
        }

        let z = masking::unmask_aggregate(&self.sum_y, &self_masks, &dropped_masks, ring)?;
        Ok(ServerOutput::Aggregate(AggregateOutput { ring, z }))
    }
}
