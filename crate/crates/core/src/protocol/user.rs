use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, RngCore};

use super::wire::{
    AdvertiseKeys, EncryptedShares, KeyDirectory, MaskedInputMsg, RevealedShare, ShareDelivery, ShareKind,
    ShareReveal, SurvivorList,
};
use super::{decode_share_pair, encode_share_pair, ProtocolConfig, ProtocolError, Shortfall};
use crate::crypto::{self, KdfLabel, KeyPair, SealContext, Seed};
use crate::masking::{self, PairwiseSeedTable};
use crate::ring::RingVector;
use crate::shamir::{self, ChunkedSecret, SecretShare};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum UserPhase {
    Init,
    KeysAdvertised,
    SharesDistributed,
    InputMasked,
    Revealed,
    Done,
    Aborted,
}

impl UserPhase {
    pub fn name(self) -> &'static str {
        match self {
            UserPhase::Init => "Init",
            UserPhase::KeysAdvertised => "KeysAdvertised",
            UserPhase::SharesDistributed => "SharesDistributed",
            UserPhase::InputMasked => "InputMasked",
            UserPhase::Revealed => "Revealed",
            UserPhase::Done => "Done",
            UserPhase::Aborted => "Aborted",
        }
    }
}

/// Shares this user holds of one peer's two secrets.
#[derive(Debug, Clone)]
struct HeldShares {
    seed: SecretShare,
    key: SecretShare,
}

/// One user's side of the protocol. Drive it with `round0` .. `round3` in order.
#[derive(Debug, Clone)]
pub struct UserState {
    id: u32,
    config: ProtocolConfig,
    phase: UserPhase,
    mask_keys: Option<KeyPair>,
    seal_keys: Option<KeyPair>,
    directory: KeyDirectory,
    seal_seeds: BTreeMap<u32, Seed>,
    self_seed: Option<Seed>,
    held: BTreeMap<u32, HeldShares>,
    peers: Vec<u32>,
}

impl UserState {
    pub fn new(id: u32, config: ProtocolConfig) -> Self {
        UserState {
            id,
            config,
            phase: UserPhase::Init,
            mask_keys: None,
            seal_keys: None,
            directory: KeyDirectory::default(),
            seal_seeds: BTreeMap::new(),
            self_seed: None,
            held: BTreeMap::new(),
            peers: Vec::new(),
        }
    }

    pub fn id(&self) -> u32 {
        self.id
    }

    pub fn phase(&self) -> UserPhase {
        self.phase
    }

    /// Users whose shares this user accepted in round 2.
    pub fn peers(&self) -> &[u32] {
        &self.peers
    }

    fn expect(&self, phase: UserPhase) -> Result<(), ProtocolError> {
        if self.phase != phase {
            return Err(ProtocolError::PhaseViolation { expected: phase.name(), actual: self.phase.name() });
        }
        Ok(())
    }

    fn guard<T>(&mut self, result: Result<T, ProtocolError>) -> Result<T, ProtocolError> {
        if let Err(e) = &result {
            if e.is_fatal() {
                self.phase = UserPhase::Aborted;
            }
        }
        result
    }

    /// Round 0: generate the masking and sealing key pairs and advertise both public keys.
    pub fn round0(&mut self, rng: &mut dyn RngCore) -> Result<AdvertiseKeys, ProtocolError> {
        self.expect(UserPhase::Init)?;
        let group = self.config.dh_group();
        let mask = group.keygen(rng);
        let seal = group.keygen(rng);
        let msg = AdvertiseKeys { mask_pk: mask.pk.clone(), seal_pk: seal.pk.clone() };
        self.mask_keys = Some(mask);
        self.seal_keys = Some(seal);
        self.phase = UserPhase::KeysAdvertised;
        Ok(msg)
    }

    /// Round 1: share the self-mask seed and the mask secret key with every
    /// user in `directory`, one sealed box per recipient.
    pub fn round1(&mut self, directory: &KeyDirectory, rng: &mut dyn RngCore) -> Result<EncryptedShares, ProtocolError> {
        self.expect(UserPhase::KeysAdvertised)?;
        let result = self.try_round1(directory, rng);
        self.guard(result)
    }

    fn try_round1(&mut self, directory: &KeyDirectory, rng: &mut dyn RngCore) -> Result<EncryptedShares, ProtocolError> {
        let present: Vec<u32> = directory.entries.keys().copied().collect();
        let mine = self.mask_keys.as_ref().zip(self.seal_keys.as_ref()).expect("keys exist after round 0");
        match directory.entries.get(&self.id) {
            None => {
                return Err(ProtocolError::InsufficientParticipants {
                    user: self.id,
                    round: 1,
                    shortfall: Shortfall::MissingSelf(self.id),
                    present,
                })
            }
            Some(keys) if keys.mask_pk != mine.0.pk || keys.seal_pk != mine.1.pk => {
                return Err(ProtocolError::UnexpectedMessage {
                    round: 1,
                    sender: super::SERVER_ID,
                    detail: format!("directory lists different keys for user {}", self.id),
                })
            }
            Some(_) => {}
        }
        if present.len() < self.config.t {
            return Err(ProtocolError::InsufficientParticipants {
                user: self.id,
                round: 1,
                shortfall: Shortfall::BelowThreshold { required: self.config.t },
                present,
            });
        }
        if let Some(&bad) = present.iter().find(|&&id| id == 0 || id as usize > self.config.n) {
            return Err(ProtocolError::UnexpectedMessage {
                round: 1,
                sender: super::SERVER_ID,
                detail: format!("directory contains unknown user id {bad}"),
            });
        }

        let group = self.config.dh_group();
        let (mask, seal) = (mine.0.clone(), mine.1.clone());
        let raw: [u8; 16] = rng.gen();
        let b = crypto::kdf(&raw, KdfLabel::SelfMask, self.id, self.id);

        let seed_shares = shamir::share_at(
            &ChunkedSecret::from_bytes(b.as_bytes()),
            self.id,
            self.config.t,
            &present,
            self.config.field,
            rng,
        )?;
        let key_shares = shamir::share_at(
            &ChunkedSecret::from_bytes(mask.sk.as_bytes()),
            self.id,
            self.config.t,
            &present,
            self.config.field,
            rng,
        )?;

        let mut boxes = BTreeMap::new();
        for ((&v, seed_share), key_share) in present.iter().zip(&seed_shares).zip(&key_shares) {
            let peer_seal_pk = &directory.entries[&v].seal_pk;
            let shared = group.agree(&seal.sk, peer_seal_pk)?;
            let (lo, hi) = (self.id.min(v), self.id.max(v));
            let key = crypto::kdf(&shared, KdfLabel::Seal, lo, hi);
            let ctx = SealContext { sender: self.id, recipient: v, round: 1 };
            boxes.insert(v, crypto::seal(&key, ctx, &encode_share_pair(seed_share, key_share)));
            self.seal_seeds.insert(v, key);
        }

        self.directory = directory.clone();
        self.self_seed = Some(b);
        self.phase = UserPhase::SharesDistributed;
        Ok(EncryptedShares { boxes })
    }

    /// Round 2: open the delivered shares and send the masked input.
    pub fn round2(&mut self, delivery: &ShareDelivery, x: &RingVector) -> Result<MaskedInputMsg, ProtocolError> {
        self.expect(UserPhase::SharesDistributed)?;
        let result = self.try_round2(delivery, x);
        self.guard(result)
    }

    fn try_round2(&mut self, delivery: &ShareDelivery, x: &RingVector) -> Result<MaskedInputMsg, ProtocolError> {
        if x.len() != self.config.len {
            return Err(crate::ring::RingError::LengthMismatch { left: x.len(), right: self.config.len }.into());
        }
        let mut held = BTreeMap::new();
        for sealed in &delivery.boxes {
            let sender = sealed.ctx.sender;
            let unexpected = |detail: String| ProtocolError::UnexpectedMessage { round: 2, sender, detail };
            let expected_ctx = SealContext { sender, recipient: self.id, round: 1 };
            if sealed.ctx != expected_ctx {
                return Err(unexpected(format!("box context {:?} is not addressed to user {}", sealed.ctx, self.id)));
            }
            let key = self.seal_seeds.get(&sender).ok_or_else(|| unexpected("sender not in key directory".into()))?;
            if held.contains_key(&sender) {
                return Err(unexpected("duplicate share box".into()));
            }
            let plaintext =
                crypto::open(key, expected_ctx, sealed).map_err(|_| ProtocolError::AuthenticationFailure { sender })?;
            let (seed, key_share) = decode_share_pair(&plaintext)?;
            let valid = |s: &SecretShare, chunks: usize| s.owner == sender && s.x == self.id && s.y.len() == chunks;
            if !valid(&seed, self.config.seed_chunks()) || !valid(&key_share, self.config.key_chunks()) {
                return Err(unexpected("share does not belong to sender or recipient".into()));
            }
            held.insert(sender, HeldShares { seed, key: key_share });
        }
        if held.len() < self.config.t {
            return Err(ProtocolError::InsufficientParticipants {
                user: self.id,
                round: 2,
                shortfall: Shortfall::BelowThreshold { required: self.config.t },
                present: held.keys().copied().collect(),
            });
        }

        let peers: Vec<u32> = held.keys().copied().collect();
        let mask = self.mask_keys.as_ref().expect("keys exist after round 0");
        let table = PairwiseSeedTable::derive(
            self.config.dh_group(),
            self.id,
            &mask.sk,
            peers.iter().map(|v| (*v, &self.directory.entries[v].mask_pk)),
        )?;
        let b = self.self_seed.expect("seed sampled in round 1");
        let masked = masking::mask_input(x, &b, self.id, &table, &peers, self.config.len, self.config.ring)?;

        self.held = held;
        self.peers = peers;
        self.phase = UserPhase::InputMasked;
        Ok(MaskedInputMsg { ring: self.config.ring, y: masked.y })
    }

    /// Round 3: reveal self-mask-seed shares of survivors and mask-key shares
    /// of everyone else this user accepted shares from.
    pub fn round3(&mut self, survivors: &SurvivorList) -> Result<ShareReveal, ProtocolError> {
        self.expect(UserPhase::InputMasked)?;
        let result = self.try_round3(survivors);
        self.guard(result)
    }

    fn try_round3(&mut self, survivors: &SurvivorList) -> Result<ShareReveal, ProtocolError> {
        let listed: BTreeSet<u32> = survivors.ids.iter().copied().collect();
        if listed.len() != survivors.ids.len() {
            return Err(ProtocolError::UnexpectedMessage {
                round: 3,
                sender: super::SERVER_ID,
                detail: "survivor list repeats an id".into(),
            });
        }
        if let Some(&stranger) = listed.iter().find(|id| !self.held.contains_key(id)) {
            return Err(ProtocolError::UnexpectedMessage {
                round: 3,
                sender: super::SERVER_ID,
                detail: format!("survivor {stranger} never shared with user {}", self.id),
            });
        }
        if listed.len() < self.config.t {
            return Err(ProtocolError::ThresholdNotMet { round: 3, required: self.config.t, got: listed.len() });
        }
        let entries = self
            .held
            .iter()
            .map(|(owner, shares)| {
                if listed.contains(owner) {
                    RevealedShare { kind: ShareKind::SelfMaskSeed, share: shares.seed.clone() }
                } else {
                    RevealedShare { kind: ShareKind::MaskKey, share: shares.key.clone() }
                }
            })
            .collect();
        self.phase = UserPhase::Revealed;
        Ok(ShareReveal { entries })
    }

    /// Marks the run complete once the server has published the aggregate.
    pub fn finish(&mut self) -> Result<(), ProtocolError> {
        self.expect(UserPhase::Revealed)?;
        self.phase = UserPhase::Done;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    use super::*;
    use crate::crypto::{GroupId, SealedBox};

    fn setup(n: usize, t: usize) -> (Vec<UserState>, KeyDirectory, ChaCha20Rng) {
        let config = ProtocolConfig::new(n, t, 2).unwrap().with_group(GroupId::Test);
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let mut users: Vec<UserState> = config.user_ids().map(|id| UserState::new(id, config.clone())).collect();
        let entries = users.iter_mut().map(|u| (u.id(), u.round0(&mut rng).unwrap())).collect();
        (users, KeyDirectory { entries }, rng)
    }

    /// Round 1 for everyone, then the per-recipient deliveries.
    fn distribute(users: &mut [UserState], dir: &KeyDirectory, rng: &mut ChaCha20Rng) -> BTreeMap<u32, ShareDelivery> {
        let sent: Vec<(u32, EncryptedShares)> = users.iter_mut().map(|u| (u.id(), u.round1(dir, rng).unwrap())).collect();
        let mut out: BTreeMap<u32, ShareDelivery> = BTreeMap::new();
        for (_, m) in sent {
            for (v, b) in m.boxes {
                out.entry(v).or_default().boxes.push(b);
            }
        }
        out
    }

    #[test]
    fn rounds_out_of_order() {
        let config = ProtocolConfig::new(3, 2, 2).unwrap();
        let mut u = UserState::new(1, config);
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let err = u.round1(&KeyDirectory::default(), &mut rng).unwrap_err();
        assert_eq!(err, ProtocolError::PhaseViolation { expected: "KeysAdvertised", actual: "Init" });
        assert_eq!(u.phase(), UserPhase::Init);
        u.round0(&mut rng).unwrap();
        assert!(matches!(u.round0(&mut rng), Err(ProtocolError::PhaseViolation { .. })));
        assert!(u.finish().is_err());
        assert_eq!(u.phase(), UserPhase::KeysAdvertised);
    }

    #[test]
    fn one_box_per_directory_entry() {
        let (mut users, dir, mut rng) = setup(3, 2);
        let m = users[0].round1(&dir, &mut rng).unwrap();
        assert_eq!(m.boxes.keys().copied().collect::<Vec<_>>(), vec![1, 2, 3]);
        for (&v, b) in &m.boxes {
            assert_eq!(b.ctx, SealContext { sender: 1, recipient: v, round: 1 });
        }
        assert_eq!(users[0].phase(), UserPhase::SharesDistributed);
    }

    #[test]
    fn missing_self_is_diagnosed() {
        let (mut users, mut dir, mut rng) = setup(3, 2);
        dir.entries.remove(&1);
        match users[0].round1(&dir, &mut rng).unwrap_err() {
            ProtocolError::InsufficientParticipants { user: 1, round: 1, shortfall, present } => {
                assert_eq!(shortfall, Shortfall::MissingSelf(1));
                assert_eq!(present, vec![2, 3]);
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(users[0].phase(), UserPhase::Aborted);
    }

    #[test]
    fn thin_directory_is_rejected() {
        let (mut users, mut dir, mut rng) = setup(3, 3);
        dir.entries.remove(&3);
        assert!(matches!(
            users[0].round1(&dir, &mut rng),
            Err(ProtocolError::InsufficientParticipants { shortfall: Shortfall::BelowThreshold { required: 3 }, .. })
        ));
    }

    #[test]
    fn boxes_open_only_for_their_recipient() {
        let (mut users, dir, mut rng) = setup(3, 2);
        let deliveries = distribute(&mut users, &dir, &mut rng);
        let x = RingVector::zeros(2);

        // A box for user 3 relabelled as a box for user 2 fails authentication.
        let mut forged = deliveries[&2].clone();
        let stolen: &SealedBox = deliveries[&3].boxes.iter().find(|b| b.ctx.sender == 1).unwrap();
        let slot = forged.boxes.iter_mut().find(|b| b.ctx.sender == 1).unwrap();
        *slot = SealedBox { ctx: SealContext { recipient: 2, ..stolen.ctx }, ciphertext: stolen.ciphertext.clone() };
        assert_eq!(users[1].clone().round2(&forged, &x).unwrap_err(), ProtocolError::AuthenticationFailure { sender: 1 });

        // Unchanged context but addressed elsewhere is refused before decryption.
        let mut misrouted = deliveries[&2].clone();
        misrouted.boxes[0] = deliveries[&3].boxes[0].clone();
        assert!(matches!(users[1].clone().round2(&misrouted, &x), Err(ProtocolError::UnexpectedMessage { .. })));

        let mut tampered = deliveries[&2].clone();
        tampered.boxes[2].ciphertext[0] ^= 1;
        let sender = tampered.boxes[2].ctx.sender;
        assert_eq!(users[1].clone().round2(&tampered, &x).unwrap_err(), ProtocolError::AuthenticationFailure { sender });

        users[1].round2(&deliveries[&2], &x).unwrap();
        assert_eq!(users[1].peers(), &[1, 2, 3]);
    }

    #[test]
    fn too_few_deliveries() {
        let (mut users, dir, mut rng) = setup(3, 3);
        let mut deliveries = distribute(&mut users, &dir, &mut rng);
        deliveries.get_mut(&1).unwrap().boxes.pop();
        let err = users[0].round2(&deliveries[&1], &RingVector::zeros(2)).unwrap_err();
        assert!(matches!(err, ProtocolError::InsufficientParticipants { round: 2, .. }), "{err:?}");
        assert_eq!(users[0].phase(), UserPhase::Aborted);
    }

    #[test]
    fn reveal_kinds_follow_survivor_list() {
        let (mut users, dir, mut rng) = setup(4, 2);
        let deliveries = distribute(&mut users, &dir, &mut rng);
        for u in users.iter_mut() {
            u.round2(&deliveries[&u.id()], &RingVector::zeros(2)).unwrap();
        }
        let r = users[0].round3(&SurvivorList { ids: vec![1, 3] }).unwrap();
        let kinds: Vec<(u32, ShareKind)> = r.entries.iter().map(|e| (e.share.owner, e.kind)).collect();
        assert_eq!(
            kinds,
            vec![(1, ShareKind::SelfMaskSeed), (2, ShareKind::MaskKey), (3, ShareKind::SelfMaskSeed), (4, ShareKind::MaskKey)]
        );
        assert!(r.entries.iter().all(|e| e.share.x == 1));
        users[0].finish().unwrap();
        assert_eq!(users[0].phase(), UserPhase::Done);

        assert_eq!(
            users[1].round3(&SurvivorList { ids: vec![2] }).unwrap_err(),
            ProtocolError::ThresholdNotMet { round: 3, required: 2, got: 1 }
        );
        assert!(matches!(users[2].round3(&SurvivorList { ids: vec![1, 1, 3] }), Err(ProtocolError::UnexpectedMessage { .. })));
        assert!(matches!(users[3].round3(&SurvivorList { ids: vec![1, 9] }), Err(ProtocolError::UnexpectedMessage { .. })));
    }
}
