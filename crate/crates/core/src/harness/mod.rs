//! In-process orchestrator.
//!
//! [`run_protocol`] drives one [`UserState`] per user and a [`ServerState`]
//! round by round. Every message crosses the boundary as encoded bytes, so
//! the transcript records exactly what a network would carry. Users scheduled
//! to drop at round `r` skip computing round `r` and everything after.

mod sweep;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::crypto;
use crate::protocol::{
    decode_message, encode_message, ProtocolConfig, ProtocolError, RoundMessage, ServerOutput, ServerState, ShareKind,
    UserState, SERVER_ID,
};
use crate::ring::RingVector;

pub use sweep::{
    emit_csv, read_csv, sweep, trial_dropouts, trial_inputs, write_csv, BenchOutcome, BenchRecord, ByteModel, SweepGrid, CSV_COLUMNS,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid dropout schedule: {0}")]
    InvalidSchedule(String),
    #[error("aggregate {got:?} differs from the survivor sum {expected:?} (n = {n}, K = {len})")]
    OracleMismatch { n: usize, len: usize, expected: Vec<u64>, got: Vec<u64> },
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: String, source: csv::Error },
}

/// Which users go silent, and from which round on.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DropoutSchedule {
    drops: BTreeMap<u32, u8>,
}

impl DropoutSchedule {
    pub fn none() -> Self {
        Self::default()
    }

    /// `user` stops sending from `round` (inclusive).
    pub fn drop_at(mut self, user: u32, round: u8) -> Result<Self, HarnessError> {
        if round > 3 {
            return Err(HarnessError::InvalidSchedule(format!("round {round} for user {user} is not in 0..=3")));
        }
        self.drops.insert(user, round);
        Ok(self)
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (u32, u8)>) -> Result<Self, HarnessError> {
        pairs.into_iter().try_fold(Self::none(), |s, (u, r)| s.drop_at(u, r))
    }

    pub fn round_of(&self, user: u32) -> Option<u8> {
        self.drops.get(&user).copied()
    }

    /// True if `user` is silent in `round`.
    pub fn is_silent(&self, user: u32, round: u8) -> bool {
        self.round_of(user).is_some_and(|r| r <= round)
    }

    pub fn len(&self) -> usize {
        self.drops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.drops.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, u8)> + '_ {
        self.drops.iter().map(|(&u, &r)| (u, r))
    }
}

impl FromStr for DropoutSchedule {
    type Err = HarnessError;

    /// Parses `"id:round,id:round,..."`; an empty string means no dropouts.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut schedule = Self::none();
        for item in s.split(',').map(str::trim).filter(|i| !i.is_empty()) {
            let bad = || HarnessError::InvalidSchedule(format!("expected id:round, got {item:?}"));
            let (id, round) = item.split_once(':').ok_or_else(bad)?;
            let id: u32 = id.trim().parse().map_err(|_| bad())?;
            let round: u8 = round.trim().parse().map_err(|_| bad())?;
            schedule = schedule.drop_at(id, round)?;
        }
        Ok(schedule)
    }
}

impl fmt::Display for DropoutSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.iter().map(|(u, r)| format!("{u}:{r}")).collect();
        f.write_str(&parts.join(","))
    }
}

/// One message as carried on the wire.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoggedMessage {
    pub round: u8,
    pub sender: u32,
    /// `None` for the published aggregate, which has no protocol recipient.
    pub recipient: Option<u32>,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DropoutEvent {
    pub user: u32,
    pub round: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ByteCounter {
    pub sent: u64,
    pub received: u64,
}

impl ByteCounter {
    pub fn total(&self) -> u64 {
        self.sent + self.received
    }
}

/// Wall-clock compute time, excluded from transcript comparisons.
#[derive(Debug, Clone, Default)]
pub struct Timings {
    pub server_ms: [f64; 4],
    /// Total over all rounds, per user.
    pub client_ms: BTreeMap<u32, f64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Aggregate(RingVector),
    Aborted(ProtocolError),
}

/// Everything that happened in one execution.
#[derive(Debug, Clone)]
pub struct Transcript {
    pub messages: Vec<LoggedMessage>,
    pub dropouts: Vec<DropoutEvent>,
    /// A user that stopped because its own state machine rejected something.
    pub user_errors: Vec<(u32, u8, ProtocolError)>,
    /// Byte counters for the server (id 0) and each user.
    pub bytes: BTreeMap<u32, ByteCounter>,
    /// `U0..U3` as fixed by the server.
    pub participants: [Vec<u32>; 4],
    pub timings: Timings,
    pub outcome: Outcome,
}

impl Transcript {
    pub fn aggregate(&self) -> Option<&RingVector> {
        match &self.outcome {
            Outcome::Aggregate(z) => Some(z),
            Outcome::Aborted(_) => None,
        }
    }

    /// Users whose masked input entered the sum.
    pub fn survivors(&self) -> &[u32] {
        &self.participants[3]
    }

    /// Equality of everything except timings.
    pub fn same_record(&self, other: &Transcript) -> bool {
        self.messages == other.messages
            && self.dropouts == other.dropouts
            && self.user_errors == other.user_errors
            && self.bytes == other.bytes
            && self.participants == other.participants
            && self.outcome == other.outcome
    }

    /// SHA-256 over every logged message, hex encoded.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for m in &self.messages {
            h.update([m.round]);
            h.update(m.sender.to_le_bytes());
            h.update(m.recipient.map_or(u32::MAX, |r| r).to_le_bytes());
            h.update((m.bytes.len() as u64).to_le_bytes());
            h.update(&m.bytes);
        }
        hex::encode(h.finalize())
    }

    pub fn user_bytes(&self) -> impl Iterator<Item = (u32, ByteCounter)> + '_ {
        self.bytes.iter().filter(|(&id, _)| id != SERVER_ID).map(|(&id, &c)| (id, c))
    }

    pub fn server_bytes(&self) -> ByteCounter {
        self.bytes.get(&SERVER_ID).copied().unwrap_or_default()
    }
}

/// Two parties learned both a seed share and a key share of `user`.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("both share kinds were revealed for user {user}")]
pub struct RevealViolation {
    pub user: u32,
}

/// Scans every round-3 message in `transcript` and fails if any user had
/// both its self-mask seed and its mask key exposed.
pub fn check_reveal_exclusivity(transcript: &Transcript) -> Result<(), RevealViolation> {
    let mut kinds: BTreeMap<u32, BTreeSet<ShareKind>> = BTreeMap::new();
    for m in transcript.messages.iter().filter(|m| m.round == 3) {
        if let Ok((RoundMessage::ShareReveal(r), _)) = decode_message(&m.bytes) {
            for e in r.entries {
                kinds.entry(e.share.owner).or_default().insert(e.kind);
            }
        }
    }
    match kinds.into_iter().find(|(_, k)| k.len() > 1) {
        Some((user, _)) => Err(RevealViolation { user }),
        None => Ok(()),
    }
}

/// Plaintext oracle: the sum of `inputs[u - 1]` over `survivors`.
pub fn survivor_sum(config: &ProtocolConfig, inputs: &[RingVector], survivors: &[u32]) -> RingVector {
    let mut acc = RingVector::zeros(config.len);
    for &u in survivors {
        acc.add_assign(&inputs[u as usize - 1], config.ring).expect("inputs validated");
    }
    acc
}

struct Orchestrator<'a> {
    config: &'a ProtocolConfig,
    schedule: &'a DropoutSchedule,
    users: Vec<UserState>,
    rngs: Vec<ChaCha20Rng>,
    /// Last server message addressed to each user, still encoded.
    pending: BTreeMap<u32, Vec<u8>>,
    transcript: Transcript,
}

impl Orchestrator<'_> {
    fn log(&mut self, round: u8, sender: u32, recipient: Option<u32>, bytes: Vec<u8>) {
        let len = bytes.len() as u64;
        self.transcript.bytes.entry(sender).or_default().sent += len;
        if let Some(r) = recipient {
            self.transcript.bytes.entry(r).or_default().received += len;
        }
        self.transcript.messages.push(LoggedMessage { round, sender, recipient, bytes });
    }

    /// Users that received the server's last message and are not yet silent.
    fn active(&mut self, round: u8) -> Vec<u32> {
        let mut active = Vec::new();
        for id in self.config.user_ids() {
            let reachable = round == 0 || self.pending.contains_key(&id);
            if !reachable {
                continue;
            }
            if self.schedule.round_of(id) == Some(round) {
                self.transcript.dropouts.push(DropoutEvent { user: id, round });
            }
            if !self.schedule.is_silent(id, round) {
                active.push(id);
            }
        }
        active
    }

    fn user_step(&mut self, id: u32, round: u8, inputs: &[RingVector]) -> Result<RoundMessage, ProtocolError> {
        let idx = id as usize - 1;
        let incoming = match self.pending.remove(&id) {
            Some(bytes) => {
                let (msg, sender) = decode_message(&bytes)?;
                if sender != SERVER_ID {
                    return Err(ProtocolError::UnexpectedMessage {
                        round,
                        sender,
                        detail: "users only accept messages from the server".into(),
                    });
                }
                Some(msg)
            }
            None => None,
        };
        let user = &mut self.users[idx];
        let rng = &mut self.rngs[idx];
        let wrong = |m: &RoundMessage| ProtocolError::UnexpectedMessage {
            round,
            sender: SERVER_ID,
            detail: format!("unexpected {}", m.name()),
        };
        Ok(match (round, incoming) {
            (0, None) => RoundMessage::AdvertiseKeys(user.round0(rng)?),
            (1, Some(RoundMessage::KeyDirectory(d))) => RoundMessage::EncryptedShares(user.round1(&d, rng)?),
            (2, Some(RoundMessage::ShareDelivery(d))) => RoundMessage::MaskedInput(user.round2(&d, &inputs[idx])?),
            (3, Some(RoundMessage::SurvivorList(s))) => RoundMessage::ShareReveal(user.round3(&s)?),
            (_, Some(m)) => return Err(wrong(&m)),
            (_, None) => unreachable!("active users always hold a pending message after round 0"),
        })
    }

    fn run(mut self, inputs: &[RingVector]) -> Transcript {
        let mut server = ServerState::new(self.config.clone());
        for round in 0u8..4 {
            let mut inbox_bytes = Vec::new();
            for id in self.active(round) {
                let started = Instant::now();
                let step = self.user_step(id, round, inputs);
                let elapsed = started.elapsed().as_secs_f64() * 1e3;
                *self.transcript.timings.client_ms.entry(id).or_default() += elapsed;
                match step {
                    Ok(msg) => {
                        let bytes = encode_message(&msg, id);
                        self.log(round, id, Some(SERVER_ID), bytes.clone());
                        inbox_bytes.push((id, bytes));
                    }
                    Err(e) => self.transcript.user_errors.push((id, round, e)),
                }
            }
            self.pending.clear();

            let started = Instant::now();
            let result = inbox_bytes
                .into_iter()
                .map(|(transport_sender, bytes)| {
                    let (msg, sender) = decode_message(&bytes)?;
                    if sender != transport_sender {
                        return Err(ProtocolError::UnexpectedMessage {
                            round,
                            sender,
                            detail: format!("envelope claims sender {sender}, transport says {transport_sender}"),
                        });
                    }
                    Ok((sender, msg))
                })
                .collect::<Result<Vec<_>, ProtocolError>>()
                .and_then(|inbox| server.run_round(round, inbox));
            let output = result.map(|out| self.route(round, out));
            self.transcript.timings.server_ms[round as usize] = started.elapsed().as_secs_f64() * 1e3;
            for i in 0..4 {
                self.transcript.participants[i] = server.participants(i).iter().copied().collect();
            }
            match output {
                Ok(Some(z)) => {
                    for user in self.users.iter_mut() {
                        let _ = user.finish();
                    }
                    self.transcript.outcome = Outcome::Aggregate(z);
                    break;
                }
                Ok(None) => {}
                Err(e) => {
                    self.transcript.outcome = Outcome::Aborted(e);
                    break;
                }
            }
        }
        self.transcript
    }

    /// Encodes and logs the server's reply; returns the aggregate at the end.
    fn route(&mut self, round: u8, out: ServerOutput) -> Option<RingVector> {
        match out {
            ServerOutput::Broadcast { recipients, message } => {
                let bytes = encode_message(&message, SERVER_ID);
                for r in recipients {
                    self.log(round, SERVER_ID, Some(r), bytes.clone());
                    self.pending.insert(r, bytes.clone());
                }
                None
            }
            ServerOutput::Addressed(map) => {
                for (r, message) in map {
                    let bytes = encode_message(&message, SERVER_ID);
                    self.log(round, SERVER_ID, Some(r), bytes.clone());
                    self.pending.insert(r, bytes);
                }
                None
            }
            ServerOutput::Aggregate(out) => {
                let bytes = encode_message(&RoundMessage::AggregateOutput(out.clone()), SERVER_ID);
                self.log(round, SERVER_ID, None, bytes);
                Some(out.z)
            }
        }
    }
}

/// Runs the full protocol over `inputs` (one per user, in id order).
///
/// Protocol aborts come back as [`Outcome::Aborted`]; only malformed
/// arguments produce an `Err`.
pub fn run_protocol(
    config: &ProtocolConfig,
    inputs: &[RingVector],
    schedule: &DropoutSchedule,
) -> Result<Transcript, HarnessError> {
    config.validate()?;
    if inputs.len() != config.n {
        return Err(HarnessError::InvalidInput(format!("{} inputs for {} users", inputs.len(), config.n)));
    }
    for (i, x) in inputs.iter().enumerate() {
        if x.len() != config.len {
            return Err(HarnessError::InvalidInput(format!("input {} has length {}, expected {}", i + 1, x.len(), config.len)));
        }
        if let Some(e) = x.entries().iter().find(|&&e| !config.ring.contains(e)) {
            return Err(HarnessError::InvalidInput(format!("input {} has entry {e} outside the ring", i + 1)));
        }
    }
    if let Some((user, _)) = schedule.iter().find(|&(u, _)| u == 0 || u as usize > config.n) {
        return Err(HarnessError::InvalidSchedule(format!("user {user} does not exist")));
    }

    let mut bytes = BTreeMap::new();
    bytes.insert(SERVER_ID, ByteCounter::default());
    for id in config.user_ids() {
        bytes.insert(id, ByteCounter::default());
    }
    let orchestrator = Orchestrator {
        config,
        schedule,
        users: config.user_ids().map(|id| UserState::new(id, config.clone())).collect(),
        rngs: config.user_ids().map(|id| crypto::user_rng(&config.master_seed, id)).collect(),
        pending: BTreeMap::new(),
        transcript: Transcript {
            messages: Vec::new(),
            dropouts: Vec::new(),
            user_errors: Vec::new(),
            bytes,
            participants: Default::default(),
            timings: Timings::default(),
            outcome: Outcome::Aborted(ProtocolError::InvalidConfig("protocol did not run".into())),
        },
    };
    Ok(orchestrator.run(inputs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::GroupId;
    use crate::ring::RingModulus;

    fn scalar_inputs(config: &ProtocolConfig, values: &[u64]) -> Vec<RingVector> {
        values.iter().map(|&v| RingVector::new(vec![v], config.ring).unwrap()).collect()
    }

    #[test]
    fn schedule_parsing() {
        let s: DropoutSchedule = "2:2, 4:3".parse().unwrap();
        assert_eq!(s.round_of(2), Some(2));
        assert_eq!(s.round_of(4), Some(3));
        assert_eq!(s.round_of(1), None);
        assert!(s.is_silent(2, 3) && !s.is_silent(2, 1));
        assert_eq!(s.to_string(), "2:2,4:3");
        assert!("".parse::<DropoutSchedule>().unwrap().is_empty());
        assert!("2".parse::<DropoutSchedule>().is_err());
        assert!("2:4".parse::<DropoutSchedule>().is_err());
        assert!("x:1".parse::<DropoutSchedule>().is_err());
    }

    #[test]
    fn single_user() {
        let config = ProtocolConfig::new(1, 1, 1).unwrap();
        let t = run_protocol(&config, &scalar_inputs(&config, &[42]), &DropoutSchedule::none()).unwrap();
        assert_eq!(t.aggregate().unwrap().entries(), &[42]);
    }

    #[test]
    fn three_users_no_dropout() {
        let config = ProtocolConfig::new(3, 2, 1).unwrap().with_ring(RingModulus::new(16).unwrap());
        let t = run_protocol(&config, &scalar_inputs(&config, &[1, 2, 3]), &DropoutSchedule::none()).unwrap();
        assert_eq!(t.aggregate().unwrap().entries(), &[6]);
        assert!(t.user_errors.is_empty());
        check_reveal_exclusivity(&t).unwrap();
    }

    #[test]
    fn three_users_one_dropout_at_round_two() {
        let config = ProtocolConfig::new(3, 2, 1).unwrap().with_ring(RingModulus::new(16).unwrap());
        let schedule = DropoutSchedule::none().drop_at(2, 2).unwrap();
        let t = run_protocol(&config, &scalar_inputs(&config, &[1, 2, 3]), &schedule).unwrap();
        assert_eq!(t.aggregate().unwrap().entries(), &[4]);
        assert_eq!(t.survivors(), &[1, 3]);
        assert_eq!(t.dropouts, vec![DropoutEvent { user: 2, round: 2 }]);
        check_reveal_exclusivity(&t).unwrap();
    }

    #[test]
    fn full_threshold_any_dropout_aborts() {
        let config = ProtocolConfig::new(3, 3, 1).unwrap();
        for round in 0..4 {
            let schedule = DropoutSchedule::none().drop_at(2, round).unwrap();
            let t = run_protocol(&config, &scalar_inputs(&config, &[1, 2, 3]), &schedule).unwrap();
            assert!(
                matches!(t.outcome, Outcome::Aborted(ProtocolError::ThresholdNotMet { round: r, .. }) if r == round),
                "round {round}: {:?}",
                t.outcome
            );
            assert!(t.messages.iter().all(|m| !matches!(decode_message(&m.bytes), Ok((RoundMessage::AggregateOutput(_), _)))));
        }
    }

    #[test]
    fn five_users_two_dropouts() {
        let config = ProtocolConfig::new(5, 3, 2).unwrap();
        let inputs: Vec<RingVector> =
            (1..=5u64).map(|u| RingVector::new(vec![u * 100, u], config.ring).unwrap()).collect();
        let schedule: DropoutSchedule = "2:2,4:2".parse().unwrap();
        let t = run_protocol(&config, &inputs, &schedule).unwrap();
        assert_eq!(t.aggregate().unwrap(), &survivor_sum(&config, &inputs, &[1, 3, 5]));
        assert_eq!(t.aggregate().unwrap().entries(), &[900, 9]);

        let schedule: DropoutSchedule = "1:2,2:2,4:2".parse().unwrap();
        let t = run_protocol(&config, &inputs, &schedule).unwrap();
        assert!(matches!(t.outcome, Outcome::Aborted(ProtocolError::ThresholdNotMet { required: 3, got: 2, .. })));
    }

    #[test]
    fn early_and_late_dropouts() {
        let config = ProtocolConfig::new(5, 2, 3).unwrap().with_group(GroupId::Test);
        let inputs: Vec<RingVector> = (1..=5u64).map(|u| RingVector::new(vec![u, 2 * u, 3 * u], config.ring).unwrap()).collect();
        // 1 never advertises, 2 stops after advertising, 3 reveals nothing.
        let schedule: DropoutSchedule = "1:0,2:1,3:3".parse().unwrap();
        let t = run_protocol(&config, &inputs, &schedule).unwrap();
        assert_eq!(t.participants[1], vec![2, 3, 4, 5]);
        assert_eq!(t.participants[2], vec![3, 4, 5]);
        assert_eq!(t.survivors(), &[3, 4, 5]);
        assert_eq!(t.aggregate().unwrap(), &survivor_sum(&config, &inputs, &[3, 4, 5]));
    }

    #[test]
    fn byte_counters_match_log() {
        let config = ProtocolConfig::new(4, 3, 5).unwrap();
        let inputs = vec![RingVector::zeros(5); 4];
        let t = run_protocol(&config, &inputs, &"3:2".parse().unwrap()).unwrap();
        let mut expected: BTreeMap<u32, ByteCounter> = BTreeMap::new();
        for m in &t.messages {
            expected.entry(m.sender).or_default().sent += m.bytes.len() as u64;
            if let Some(r) = m.recipient {
                expected.entry(r).or_default().received += m.bytes.len() as u64;
            }
        }
        for (id, c) in &t.bytes {
            assert_eq!(expected.get(id).copied().unwrap_or_default(), *c, "party {id}");
        }
    }

    #[test]
    fn replay_is_byte_identical() {
        let config = ProtocolConfig::new(4, 2, 6).unwrap().with_master_seed([9; 16]);
        let inputs: Vec<RingVector> = (0..4).map(|u| RingVector::new(vec![u; 6], config.ring).unwrap()).collect();
        let schedule: DropoutSchedule = "1:2".parse().unwrap();
        let a = run_protocol(&config, &inputs, &schedule).unwrap();
        let b = run_protocol(&config, &inputs, &schedule).unwrap();
        assert!(a.same_record(&b));
        assert_eq!(a.fingerprint(), b.fingerprint());
        let c = run_protocol(&config.clone().with_master_seed([8; 16]), &inputs, &schedule).unwrap();
        assert_ne!(a.fingerprint(), c.fingerprint());
        assert_eq!(a.aggregate(), c.aggregate());
    }

    #[test]
    fn rejects_bad_arguments() {
        let config = ProtocolConfig::new(2, 1, 2).unwrap();
        assert!(run_protocol(&config, &[RingVector::zeros(2)], &DropoutSchedule::none()).is_err());
        assert!(run_protocol(&config, &[RingVector::zeros(2), RingVector::zeros(3)], &DropoutSchedule::none()).is_err());
        let schedule = DropoutSchedule::none().drop_at(3, 1).unwrap();
        assert!(run_protocol(&config, &[RingVector::zeros(2), RingVector::zeros(2)], &schedule).is_err());
    }
}
