//! Parameter sweeps, CSV output and the closed-form byte model.

use std::fs::File;
use std::io::{self, Write};
use std::path::Path;

use rand::seq::index;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{check_reveal_exclusivity, run_protocol, survivor_sum, DropoutSchedule, HarnessError, Outcome, Transcript};
use crate::crypto::{GroupId, SealContext, SealedBox};
use crate::protocol::ProtocolConfig;
use crate::ring::{RingModulus, RingVector};
use crate::shamir::SecretShare;

/// Header of every emitted CSV, in column order.
pub const CSV_COLUMNS: [&str; 14] = [
    "n",
    "K",
    "t",
    "dropouts",
    "seed",
    "client_bytes_max",
    "client_bytes_mean",
    "server_bytes",
    "client_ms_mean",
    "server_ms_r0",
    "server_ms_r1",
    "server_ms_r2",
    "server_ms_r3",
    "outcome",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchOutcome {
    Ok,
    Abort,
}

/// One row of benchmark output. Byte columns count sent plus received.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub t: usize,
    pub dropouts: usize,
    /// Hex master seed of this trial; `secagg run --seed` replays it.
    pub seed: String,
    pub client_bytes_max: u64,
    pub client_bytes_mean: f64,
    pub server_bytes: u64,
    pub client_ms_mean: f64,
    pub server_ms_r0: f64,
    pub server_ms_r1: f64,
    pub server_ms_r2: f64,
    pub server_ms_r3: f64,
    pub outcome: BenchOutcome,
}

impl BenchRecord {
    pub fn from_transcript(config: &ProtocolConfig, dropouts: usize, transcript: &Transcript) -> Self {
        let clients: Vec<u64> = transcript.user_bytes().map(|(_, c)| c.total()).collect();
        let ms = &transcript.timings;
        let active_ms: Vec<f64> = ms.client_ms.values().copied().collect();
        BenchRecord {
            n: config.n,
            k: config.len,
            t: config.t,
            dropouts,
            seed: hex::encode(config.master_seed),
            client_bytes_max: clients.iter().copied().max().unwrap_or(0),
            client_bytes_mean: mean(clients.iter().map(|&b| b as f64)),
            server_bytes: transcript.server_bytes().total(),
            client_ms_mean: mean(active_ms.into_iter()),
            server_ms_r0: ms.server_ms[0],
            server_ms_r1: ms.server_ms[1],
            server_ms_r2: ms.server_ms[2],
            server_ms_r3: ms.server_ms[3],
            outcome: match transcript.outcome {
                Outcome::Aggregate(_) => BenchOutcome::Ok,
                Outcome::Aborted(_) => BenchOutcome::Abort,
            },
        }
    }

    /// The record with every timing column zeroed.
    pub fn without_timings(&self) -> Self {
        BenchRecord {
            client_ms_mean: 0.0,
            server_ms_r0: 0.0,
            server_ms_r1: 0.0,
            server_ms_r2: 0.0,
            server_ms_r3: 0.0,
            ..self.clone()
        }
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// The points and trials of one sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub users: Vec<usize>,
    pub veclens: Vec<usize>,
    /// Fraction of users that go silent at round 2, rounded to the nearest count.
    pub dropout_fracs: Vec<f64>,
    /// `t = ceil(frac * n)`; `None` selects the majority threshold.
    pub threshold_frac: Option<f64>,
    pub trials: usize,
    pub seed: [u8; 16],
    pub ring: RingModulus,
    pub group: GroupId,
}

impl Default for SweepGrid {
    fn default() -> Self {
        SweepGrid {
            users: vec![10, 20, 40],
            veclens: vec![100, 1000],
            dropout_fracs: vec![0.0, 0.1, 0.3],
            threshold_frac: None,
            trials: 3,
            seed: [0; 16],
            ring: RingModulus::default(),
            group: GroupId::default(),
        }
    }
}

impl SweepGrid {
    pub fn threshold(&self, n: usize) -> usize {
        match self.threshold_frac {
            Some(f) => ((f * n as f64).ceil() as usize).clamp(1, n),
            None => ProtocolConfig::default_threshold(n),
        }
    }

    pub fn dropout_count(n: usize, frac: f64) -> usize {
        ((frac * n as f64).round() as usize).min(n)
    }

    fn validate(&self) -> Result<(), HarnessError> {
        if self.users.is_empty() || self.veclens.is_empty() || self.dropout_fracs.is_empty() || self.trials == 0 {
            return Err(HarnessError::InvalidInput("sweep grid is empty".into()));
        }
        if let Some(f) = self.dropout_fracs.iter().find(|f| !(0.0..=1.0).contains(*f)) {
            return Err(HarnessError::InvalidInput(format!("dropout fraction {f} outside [0, 1]")));
        }
        if let Some(f) = self.threshold_frac.filter(|f| !(*f > 0.0 && *f <= 1.0)) {
            return Err(HarnessError::InvalidInput(format!("threshold fraction {f} outside (0, 1]")));
        }
        Ok(())
    }

    /// Master seed of one trial, derived from the sweep seed and the point.
    pub fn trial_seed(&self, n: usize, len: usize, frac: f64, trial: usize) -> [u8; 16] {
        let mut h = Sha256::new();
        h.update(b"secagg-trial");
        h.update(self.seed);
        for v in [n as u64, len as u64, frac.to_bits(), trial as u64] {
            h.update(v.to_le_bytes());
        }
        h.finalize()[..16].try_into().expect("16 of 32 bytes")
    }
}

fn stream(seed: &[u8; 16], label: &[u8]) -> ChaCha20Rng {
    let mut h = Sha256::new();
    h.update(label);
    h.update(seed);
    ChaCha20Rng::from_seed(h.finalize().into())
}

/// Uniform inputs for every user of `config`, determined by its master seed.
pub fn trial_inputs(config: &ProtocolConfig) -> Vec<RingVector> {
    let mut rng = stream(&config.master_seed, b"inputs");
    let mask = config.ring.mask();
    config
        .user_ids()
        .map(|_| RingVector::from_reduced((0..config.len).map(|_| rng.next_u64() & mask).collect(), config.ring))
        .collect()
}

/// `d` distinct users, dropping at round 2, determined by the master seed.
pub fn trial_dropouts(config: &ProtocolConfig, d: usize) -> DropoutSchedule {
    let mut rng = stream(&config.master_seed, b"dropouts");
    let picked = index::sample(&mut rng, config.n, d.min(config.n));
    DropoutSchedule::from_pairs(picked.into_iter().map(|i| (i as u32 + 1, 2))).expect("round 2 is valid")
}

/// Runs every (n, K, dropout fraction, trial) point of `grid`.
///
/// Each successful aggregate is checked against the survivor-sum oracle and
/// each transcript against reveal exclusivity; either failing is an error.
pub fn sweep(grid: &SweepGrid) -> Result<Vec<BenchRecord>, HarnessError> {
    grid.validate()?;
    let mut records = Vec::new();
    for &n in &grid.users {
        for &len in &grid.veclens {
            for &frac in &grid.dropout_fracs {
                for trial in 0..grid.trials {
                    let config = ProtocolConfig::new(n, grid.threshold(n), len)?
                        .with_ring(grid.ring)
                        .with_group(grid.group)
                        .with_master_seed(grid.trial_seed(n, len, frac, trial));
                    let d = SweepGrid::dropout_count(n, frac);
                    let inputs = trial_inputs(&config);
                    let transcript = run_protocol(&config, &inputs, &trial_dropouts(&config, d))?;
                    if let Some(z) = transcript.aggregate() {
                        let expected = survivor_sum(&config, &inputs, transcript.survivors());
                        if *z != expected {
                            return Err(HarnessError::OracleMismatch {
                                n,
                                len,
                                expected: expected.into_entries(),
                                got: z.entries().to_vec(),
                            });
                        }
                    }
                    check_reveal_exclusivity(&transcript)
                        .map_err(|e| HarnessError::InvalidInput(format!("transcript check failed: {e}")))?;
                    records.push(BenchRecord::from_transcript(&config, d, &transcript));
                }
            }
        }
    }
    Ok(records)
}

pub fn write_csv<W: Write>(records: &[BenchRecord], out: W) -> Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_COLUMNS)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `records` to `path` as CSV with a header line.
pub fn emit_csv(records: &[BenchRecord], path: impl AsRef<Path>) -> Result<(), HarnessError> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let file = File::create(path).map_err(|source| HarnessError::Io { path: display.clone(), source })?;
    write_csv(records, io::BufWriter::new(file)).map_err(|source| HarnessError::Csv { path: display, source })
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<BenchRecord>, HarnessError> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let mut r = csv::Reader::from_path(path).map_err(|source| HarnessError::Csv { path: display.clone(), source })?;
    if r.headers().map_err(|source| HarnessError::Csv { path: display.clone(), source })?.iter().ne(CSV_COLUMNS) {
        return Err(HarnessError::InvalidInput(format!("{display}: unexpected CSV header")));
    }
    r.deserialize()
        .collect::<Result<Vec<BenchRecord>, _>>()
        .map_err(|source| HarnessError::Csv { path: display, source })
}

/// Per-client bytes in a run without dropouts, as `per_entry * K + per_user * n + fixed`.
///
/// Counts every message a user sends and receives; the published aggregate
/// has no user recipient.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ByteModel {
    pub per_entry: u64,
    pub per_user: u64,
    pub fixed: u64,
}

impl ByteModel {
    const ENVELOPE: u64 = 9;

    pub fn for_config(config: &ProtocolConfig) -> Self {
        let pk = config.dh_group().public_key_len() as u64;
        let share = |chunks: usize| SecretShare::encoded_len(chunks) as u64;
        let (seed, key) = (share(config.seed_chunks()), share(config.key_chunks()));
        let plaintext = 1 + seed + 1 + key;
        let sealed = SealContext::ENCODED_LEN as u64 + 4 + plaintext + SealedBox::TAG_LEN as u64;
        let keys = 2 * (1 + pk);

        // Sent: AdvertiseKeys, EncryptedShares, MaskedInput, ShareReveal.
        // Received: KeyDirectory, ShareDelivery, SurvivorList.
        let per_user = (4 + sealed) + (2 + seed) + (4 + keys) + sealed + 4;
        let fixed = 7 * Self::ENVELOPE + keys + 4 + (1 + 4) + 4 + 4 + 4 + 4;
        ByteModel { per_entry: config.ring.entry_bytes() as u64, per_user, fixed }
    }

    pub fn client_bytes(&self, n: usize, len: usize) -> u64 {
        self.per_entry * len as u64 + self.per_user * n as u64 + self.fixed
    }
}
