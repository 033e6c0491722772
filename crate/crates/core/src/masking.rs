//! Double masking.
//!
//! A user `u` sends `y_u = x_u + PRG(b_u) + sum_{v > u} PRG(s_{u,v}) - sum_{v < u} PRG(s_{u,v})`
//! modulo `R`. Pairwise terms cancel across any set of users that all
//! contributed. When some users drop after the masks were fixed, the server
//! rebuilds their pairwise masks from reconstructed keys and removes what is
//! left over.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::crypto::{self, CryptoError, DhGroup, KdfLabel, PublicKey, SecretKey, Seed};
use crate::ring::{RingError, RingModulus, RingVector};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MaskingError {
    #[error("user {owner} has no pairwise seed for peer {peer}")]
    MissingSeed { owner: u32, peer: u32 },
    #[error("no public key for survivor {0}")]
    MissingPublicKey(u32),
    #[error("user {0} is listed as both dropped and surviving")]
    DroppedIsSurvivor(u32),
    #[error(transparent)]
    Ring(#[from] RingError),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
}

/// Seeds `s_{u,v}` held by `owner` for each peer `v`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PairwiseSeedTable {
    pub owner: u32,
    pub entries: BTreeMap<u32, Seed>,
}

impl PairwiseSeedTable {
    pub fn new(owner: u32) -> Self {
        PairwiseSeedTable { owner, entries: BTreeMap::new() }
    }

    /// Agrees a seed with every peer in `peer_keys` other than `owner`.
    pub fn derive<'a>(
        group: &dyn DhGroup,
        owner: u32,
        sk: &SecretKey,
        peer_keys: impl IntoIterator<Item = (u32, &'a PublicKey)>,
    ) -> Result<Self, CryptoError> {
        let mut table = PairwiseSeedTable::new(owner);
        for (peer, pk) in peer_keys {
            if peer != owner {
                table.entries.insert(peer, pairwise_seed(group, owner, sk, peer, pk)?);
            }
        }
        Ok(table)
    }

    pub fn get(&self, peer: u32) -> Option<&Seed> {
        self.entries.get(&peer)
    }
}

/// `s_{u,v} = kdf(agree(sk_u, pk_v), "pairwise-mask", min(u,v), max(u,v))`.
pub fn pairwise_seed(
    group: &dyn DhGroup,
    me: u32,
    sk: &SecretKey,
    peer: u32,
    peer_pk: &PublicKey,
) -> Result<Seed, CryptoError> {
    let shared = group.agree(sk, peer_pk)?;
    let (lo, hi) = if me < peer { (me, peer) } else { (peer, me) };
    Ok(crypto::kdf(&shared, KdfLabel::PairwiseMask, lo, hi))
}

/// A user's round-2 contribution `y_u`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskedInput {
    pub sender: u32,
    pub y: RingVector,
}

fn accumulate_pairwise(
    u: u32,
    table: &PairwiseSeedTable,
    peers: &[u32],
    acc: &mut RingVector,
    ring: RingModulus,
) -> Result<(), MaskingError> {
    for &v in peers.iter().filter(|&&v| v != u) {
        let seed = table.get(v).ok_or(MaskingError::MissingSeed { owner: u, peer: v })?;
        crypto::prg_accumulate(seed, v < u, acc, ring);
    }
    Ok(())
}

/// Signed sum of pairwise masks: `+PRG(s_{u,v})` for `v > u`, `-PRG(s_{u,v})` for `v < u`.
pub fn pairwise_mask(
    u: u32,
    table: &PairwiseSeedTable,
    peers: &[u32],
    len: usize,
    ring: RingModulus,
) -> Result<RingVector, MaskingError> {
    let mut acc = RingVector::zeros(len);
    accumulate_pairwise(u, table, peers, &mut acc, ring)?;
    Ok(acc)
}

pub fn self_mask(b: &Seed, len: usize, ring: RingModulus) -> RingVector {
    crypto::prg_expand(b, len, ring)
}

/// `y = x + self_mask(b) + pairwise_mask(u, ...)`.
pub fn mask_input(
    x: &RingVector,
    b: &Seed,
    u: u32,
    table: &PairwiseSeedTable,
    peers: &[u32],
    len: usize,
    ring: RingModulus,
) -> Result<MaskedInput, MaskingError> {
    if x.len() != len {
        return Err(RingError::LengthMismatch { left: x.len(), right: len }.into());
    }
    let mut y = x.clone();
    crypto::prg_accumulate(b, false, &mut y, ring);
    accumulate_pairwise(u, table, peers, &mut y, ring)?;
    Ok(MaskedInput { sender: u, y })
}

/// The pairwise mask `dropped` would have added, restricted to `survivors`,
/// recomputed from its reconstructed secret key.
pub fn dropped_user_mask(
    group: &dyn DhGroup,
    dropped: u32,
    reconstructed_sk: &SecretKey,
    survivor_pks: &BTreeMap<u32, PublicKey>,
    survivors: &[u32],
    len: usize,
    ring: RingModulus,
) -> Result<RingVector, MaskingError> {
    if survivors.contains(&dropped) {
        return Err(MaskingError::DroppedIsSurvivor(dropped));
    }
    let mut acc = RingVector::zeros(len);
    for &v in survivors {
        let pk = survivor_pks.get(&v).ok_or(MaskingError::MissingPublicKey(v))?;
        let seed = pairwise_seed(group, dropped, reconstructed_sk, v, pk)?;
        crypto::prg_accumulate(&seed, v < dropped, &mut acc, ring);
    }
    Ok(acc)
}

/// Removes every mask from the survivors' summed `y`.
///
/// Each survivor's `y` carries the negation of its pairwise term with each
/// dropped user, so the residue left in `sum_y` is `-sum(dropped_masks)`.
/// Removing it means adding the dropped users' own masks back.
pub fn unmask_aggregate(
    sum_y: &RingVector,
    survivor_self_masks: &[RingVector],
    dropped_masks: &[RingVector],
    ring: RingModulus,
) -> Result<RingVector, MaskingError> {
    let mut z = sum_y.clone();
    for m in survivor_self_masks {
        z.sub_assign(m, ring)?;
    }
    for m in dropped_masks {
        z.add_assign(m, ring)?;
    }
    Ok(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{GroupId, KeyPair};
    use crate::ring::vec_add;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn r8() -> RingModulus {
        RingModulus::new(8).unwrap()
    }

    /// Direct, allocation-heavy oracle for the signed pairwise sum.
    fn naive_pairwise(u: u32, table: &PairwiseSeedTable, peers: &[u32], len: usize, ring: RingModulus) -> RingVector {
        let mut acc = RingVector::zeros(len);
        for &v in peers.iter().filter(|&&v| v != u) {
            let m = crypto::prg_expand(table.get(v).unwrap(), len, ring);
            if v > u {
                acc = vec_add(&acc, &m, ring).unwrap();
            } else {
                acc = crate::ring::vec_sub(&acc, &m, ring).unwrap();
            }
        }
        acc
    }

    fn keys(group: GroupId, ids: &[u32], seed: u64) -> BTreeMap<u32, KeyPair> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        ids.iter().map(|&id| (id, group.group().keygen(&mut rng))).collect()
    }

    fn tables(group: GroupId, kps: &BTreeMap<u32, KeyPair>) -> BTreeMap<u32, PairwiseSeedTable> {
        kps.iter()
            .map(|(&u, kp)| {
                let t = PairwiseSeedTable::derive(group.group(), u, &kp.sk, kps.iter().map(|(&v, k)| (v, &k.pk))).unwrap();
                (u, t)
            })
            .collect()
    }

    #[test]
    fn lone_user_has_zero_pairwise_mask() {
        let table = PairwiseSeedTable::new(3);
        assert!(pairwise_mask(3, &table, &[3], 5, r8()).unwrap().is_zero());
    }

    #[test]
    fn missing_seed_is_reported() {
        let table = PairwiseSeedTable::new(3);
        assert_eq!(pairwise_mask(3, &table, &[1, 3], 5, r8()), Err(MaskingError::MissingSeed { owner: 3, peer: 1 }));
    }

    #[test]
    fn seed_tables_are_symmetric() {
        for g in [GroupId::Test, GroupId::Prod] {
            let t = tables(g, &keys(g, &[1, 2, 3, 4], 1));
            for (&u, tu) in &t {
                for (&v, seed) in &tu.entries {
                    assert_eq!(t[&v].get(u), Some(seed));
                }
            }
        }
    }

    #[test]
    fn two_users_cancel() {
        let t = tables(GroupId::Prod, &keys(GroupId::Prod, &[1, 2], 2));
        let ring = RingModulus::new(32).unwrap();
        let a = pairwise_mask(1, &t[&1], &[1, 2], 1, ring).unwrap();
        let b = pairwise_mask(2, &t[&2], &[1, 2], 1, ring).unwrap();
        assert!(!a.is_zero());
        assert!(vec_add(&a, &b, ring).unwrap().is_zero());
    }

    #[test]
    fn three_users_cancel_and_match_naive() {
        let ids = [1, 2, 3];
        let t = tables(GroupId::Prod, &keys(GroupId::Prod, &ids, 3));
        let ring = RingModulus::new(32).unwrap();
        let mut sum = RingVector::zeros(4);
        for u in ids {
            let m = pairwise_mask(u, &t[&u], &ids, 4, ring).unwrap();
            assert_eq!(m, naive_pairwise(u, &t[&u], &ids, 4, ring));
            sum = vec_add(&sum, &m, ring).unwrap();
        }
        assert!(sum.is_zero());
    }

    #[test]
    fn two_user_masked_sum() {
        let ids = [1, 2];
        let t = tables(GroupId::Prod, &keys(GroupId::Prod, &ids, 4));
        let ring = r8();
        let (b1, b2) = (Seed([1; 16]), Seed([2; 16]));
        let x1 = RingVector::new(vec![3], ring).unwrap();
        let x2 = RingVector::new(vec![4], ring).unwrap();
        let y1 = mask_input(&x1, &b1, 1, &t[&1], &ids, 1, ring).unwrap();
        let y2 = mask_input(&x2, &b2, 2, &t[&2], &ids, 1, ring).unwrap();
        let sum = vec_add(&y1.y, &y2.y, ring).unwrap();
        let z = unmask_aggregate(&sum, &[self_mask(&b1, 1, ring), self_mask(&b2, 1, ring)], &[], ring).unwrap();
        assert_eq!(z.entries(), &[7]);
    }

    #[test]
    fn single_user_no_pairwise_terms() {
        let ring = r8();
        let b = Seed([9; 16]);
        let x = RingVector::new(vec![10, 20], ring).unwrap();
        let y = mask_input(&x, &b, 1, &PairwiseSeedTable::new(1), &[1], 2, ring).unwrap();
        assert_eq!(y.y, vec_add(&x, &self_mask(&b, 2, ring), ring).unwrap());
        assert_eq!(unmask_aggregate(&y.y, &[self_mask(&b, 2, ring)], &[], ring).unwrap(), x);
    }

    #[test]
    fn mask_input_checks_length() {
        let ring = r8();
        let x = RingVector::zeros(3);
        assert!(matches!(
            mask_input(&x, &Seed([0; 16]), 1, &PairwiseSeedTable::new(1), &[1], 2, ring),
            Err(MaskingError::Ring(RingError::LengthMismatch { .. }))
        ));
    }

    #[test]
    fn dropped_mask_matches_restricted_pairwise_mask() {
        let g = GroupId::Prod;
        let ids = [1, 2, 3, 4, 5];
        let kps = keys(g, &ids, 5);
        let t = tables(g, &kps);
        let pks: BTreeMap<u32, PublicKey> = kps.iter().map(|(&u, k)| (u, k.pk.clone())).collect();
        let ring = RingModulus::new(16).unwrap();
        for dropped in ids {
            let survivors: Vec<u32> = ids.iter().copied().filter(|&v| v != dropped).collect();
            let rebuilt =
                dropped_user_mask(g.group(), dropped, &kps[&dropped].sk, &pks, &survivors, 8, ring).unwrap();
            let expected = pairwise_mask(dropped, &t[&dropped], &survivors, 8, ring).unwrap();
            assert_eq!(rebuilt, expected);
        }
        assert!(dropped_user_mask(g.group(), 1, &kps[&1].sk, &pks, &[], 8, ring).unwrap().is_zero());
        assert_eq!(
            dropped_user_mask(g.group(), 1, &kps[&1].sk, &pks, &[1, 2], 8, ring),
            Err(MaskingError::DroppedIsSurvivor(1))
        );
        assert_eq!(
            dropped_user_mask(g.group(), 1, &kps[&1].sk, &BTreeMap::new(), &[2], 8, ring),
            Err(MaskingError::MissingPublicKey(2))
        );
    }

    #[test]
    fn single_survivor_dropped_mask_is_positive_prg() {
        let g = GroupId::Test;
        let kps = keys(g, &[1, 2], 6);
        let pks: BTreeMap<u32, PublicKey> = kps.iter().map(|(&u, k)| (u, k.pk.clone())).collect();
        let ring = r8();
        let m = dropped_user_mask(g.group(), 1, &kps[&1].sk, &pks, &[2], 6, ring).unwrap();
        let seed = pairwise_seed(g.group(), 2, &kps[&2].sk, 1, &kps[&1].pk).unwrap();
        assert_eq!(m, crypto::prg_expand(&seed, 6, ring));
    }

    /// Exhaustive over dropout patterns for n <= 6: survivors' plaintext sum
    /// is recovered once self masks and dropped users' masks are removed.
    #[test]
    fn unmasking_exhaustive_small() {
        let g = GroupId::Test;
        let ring = RingModulus::new(16).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(99);
        for n in 1..=6u32 {
            let ids: Vec<u32> = (1..=n).collect();
            let kps = keys(g, &ids, n as u64);
            let t = tables(g, &kps);
            let pks: BTreeMap<u32, PublicKey> = kps.iter().map(|(&u, k)| (u, k.pk.clone())).collect();
            let len = 3;
            let xs: BTreeMap<u32, RingVector> = ids
                .iter()
                .map(|&u| (u, RingVector::from_reduced((0..len).map(|_| rng.gen()).collect(), ring)))
                .collect();
            let bs: BTreeMap<u32, Seed> = ids.iter().map(|&u| (u, Seed(rng.gen()))).collect();
            let ys: BTreeMap<u32, RingVector> = ids
                .iter()
                .map(|&u| (u, mask_input(&xs[&u], &bs[&u], u, &t[&u], &ids, len, ring).unwrap().y))
                .collect();
            for pattern in 1u32..(1 << n) {
                let survivors: Vec<u32> = ids.iter().copied().filter(|u| pattern >> (u - 1) & 1 == 1).collect();
                let dropped: Vec<u32> = ids.iter().copied().filter(|u| !survivors.contains(u)).collect();
                let mut sum = RingVector::zeros(len);
                let mut oracle = RingVector::zeros(len);
                for u in &survivors {
                    sum.add_assign(&ys[u], ring).unwrap();
                    oracle.add_assign(&xs[u], ring).unwrap();
                }
                let selfs: Vec<RingVector> = survivors.iter().map(|u| self_mask(&bs[u], len, ring)).collect();
                let drops: Vec<RingVector> = dropped
                    .iter()
                    .map(|&d| dropped_user_mask(g.group(), d, &kps[&d].sk, &pks, &survivors, len, ring).unwrap())
                    .collect();
                assert_eq!(unmask_aggregate(&sum, &selfs, &drops, ring).unwrap(), oracle, "n={n} pattern={pattern:b}");
            }
        }
    }
}
