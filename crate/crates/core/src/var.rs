//! Validation and authentication requests (VARs).
//!
//! After every block the system picks `ceil(α·K)` of the `K` currently valid
//! keys and requests their verification. The choice is seeded from the block
//! hash, so every node derives the same VARs for the same block. VARs enter
//! the chain in the next block; users cannot create them by hand.
//!
//! Who may fulfil a VAR is decided by a hash lottery: the first
//! `prefix_bits` bits of `hash(var ‖ verifier key record)` must equal
//! `prefix_pattern`, and the verifier key must have been registered in a
//! block before the VAR's.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::chain::{Block, Chain, ChainError};
use crate::crypto::{hash_parts, Digest};
use crate::keylife::{key_status, KeyStatus};
use crate::protocol::{start_session, ChallengeSpec, ProtocolError, VaSession};
use crate::records::{Day, PublicKeyRecord, Record, VaKind, VaRecord, VarKind, VarStatus, Visibility};

pub const DEFAULT_VAR_RATE: f64 = 0.05;
pub const DEFAULT_EXPIRY_BLOCKS: u64 = 30;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum VarError {
    #[error("prefix_bits must be in 1..=16, got {0}")]
    BadPrefixBits(u8),
    #[error("prefix pattern {pattern:#b} does not fit in {bits} bits")]
    BadPattern { pattern: u32, bits: u8 },
    #[error("var_rate must be in (0, 1], got {0}")]
    BadRate(f64),
    #[error("unknown VAR {0}")]
    UnknownVar(Digest),
    #[error("unknown key {0}")]
    UnknownKey(Digest),
    #[error("key is not eligible to fulfil this VAR")]
    NotEligible,
    #[error("VAR is already claimed or closed ({0:?})")]
    VarClosed(VarStatus),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionParams {
    pub prefix_bits: u8,
    pub prefix_pattern: u32,
    pub var_rate: f64,
    pub expiry_blocks: u64,
}

impl Default for SelectionParams {
    fn default() -> Self {
        Self { prefix_bits: 1, prefix_pattern: 0, var_rate: DEFAULT_VAR_RATE, expiry_blocks: DEFAULT_EXPIRY_BLOCKS }
    }
}

impl SelectionParams {
    pub fn validate(&self) -> Result<(), VarError> {
        if !(1..=16).contains(&self.prefix_bits) {
            return Err(VarError::BadPrefixBits(self.prefix_bits));
        }
        if self.prefix_pattern >> self.prefix_bits != 0 {
            return Err(VarError::BadPattern { pattern: self.prefix_pattern, bits: self.prefix_bits });
        }
        if !(self.var_rate > 0.0 && self.var_rate <= 1.0) {
            return Err(VarError::BadRate(self.var_rate));
        }
        Ok(())
    }

    /// Number of VARs for `valid_keys` keys: `ceil(α·K)`.
    pub fn var_count(&self, valid_keys: usize) -> usize {
        // The epsilon keeps exact products such as 0.05 * 100 from rounding up.
        ((self.var_rate * valid_keys as f64) - 1e-9).ceil().max(0.0) as usize
    }
}

/// Keys registered up to `height` that are valid at `day`, in registration order.
pub fn valid_keys_at(chain: &Chain, height: u64, day: Day) -> Vec<Digest> {
    chain
        .keys()
        .filter(|(loc, k)| loc.height <= height && key_status(chain, &k.key_id, day) == KeyStatus::Valid)
        .map(|(_, k)| k.key_id)
        .collect()
}

/// VARs for `block`, which must be on `chain`.
pub fn generate_vars(chain: &Chain, block: &Block, params: &SelectionParams) -> Vec<VaRecord> {
    let keys = valid_keys_at(chain, block.height, block.timestamp);
    let m = params.var_count(keys.len()).min(keys.len());
    if m == 0 {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::from_seed(*block.block_hash.as_bytes());
    let picks = sample(&mut rng, keys.len(), m);
    picks
        .into_iter()
        .map(|i| {
            let kind = match rng.gen_range(0..3) {
                0 => VarKind::Validation,
                1 => VarKind::Authentication,
                _ => VarKind::Both,
            };
            let mut v = VaRecord {
                var_id: Digest::ZERO,
                target_key_id: keys[i],
                kind,
                created_at_block: block.height,
                status: VarStatus::Open,
            };
            v.var_id = v.computed_id();
            v
        })
        .collect()
}

/// Hash-lottery part of eligibility.
pub fn selection_hash(var: &VaRecord, verifier: &PublicKeyRecord) -> Digest {
    hash_parts(&[&Record::Var(var.clone()).to_bytes(), &Record::PublicKey(verifier.clone()).to_bytes()])
}

pub fn eligible(var: &VaRecord, verifier: &PublicKeyRecord, chain: &Chain, params: &SelectionParams) -> bool {
    if verifier.key_id == var.target_key_id {
        return false;
    }
    match chain.key_record(&verifier.key_id) {
        Some((loc, _)) if loc.height < var.created_at_block => {}
        _ => return false,
    }
    if key_status(chain, &verifier.key_id, chain.tip().timestamp) != KeyStatus::Valid {
        return false;
    }
    selection_hash(var, verifier).prefix_bits(params.prefix_bits as u32) == params.prefix_pattern
}

pub fn find_var<'a>(chain: &'a Chain, var_id: &Digest) -> Option<(u64, &'a VaRecord)> {
    chain.records_by_id(var_id).find_map(|(loc, r)| match r {
        Record::Var(v) => Some((loc.height, v)),
        _ => None,
    })
}

/// Session of the first challenge on chain that references the VAR.
pub fn claiming_session(chain: &Chain, var_id: &Digest) -> Option<Digest> {
    chain.challenges_for_var(var_id).find_map(|(_, r)| match r {
        Record::Challenge(c) => Some(c.session_id),
        _ => None,
    })
}

/// Effective status, derived from the claiming session's results.
pub fn var_status(chain: &Chain, var: &VaRecord, params: &SelectionParams) -> VarStatus {
    if let Some(session) = claiming_session(chain, &var.var_id) {
        let mut successes = 0;
        for (_, r) in chain.session_records(&session) {
            if let Record::VaResult(v) = r {
                if !v.is_success() {
                    return VarStatus::Failed;
                }
                successes += 1;
            }
        }
        if successes >= 2 {
            return VarStatus::Fulfilled;
        }
    }
    let tip = chain.tip().height;
    if tip > var.created_at_block + params.expiry_blocks {
        VarStatus::Expired
    } else {
        VarStatus::Open
    }
}

/// Starts the session that fulfils a VAR. `Both` VARs run an authentication
/// session, which subsumes validation of the key.
#[allow(clippy::too_many_arguments)]
pub fn fulfil_var(
    chain: &Chain,
    var_id: &Digest,
    verifier_key_id: &Digest,
    params: &SelectionParams,
    now: Day,
    deadline_days: Day,
    min_bits: u32,
    rng: &mut dyn RngCore,
) -> Result<VaSession, VarError> {
    let (_, var) = find_var(chain, var_id).ok_or(VarError::UnknownVar(*var_id))?;
    let (_, verifier) = chain.key_record(verifier_key_id).ok_or(VarError::UnknownKey(*verifier_key_id))?;
    let status = var_status(chain, var, params);
    if status != VarStatus::Open {
        return Err(VarError::VarClosed(status));
    }
    if claiming_session(chain, var_id).is_some() {
        return Err(VarError::VarClosed(VarStatus::Open));
    }
    if !eligible(var, verifier, chain, params) {
        return Err(VarError::NotEligible);
    }
    let kind = match var.kind {
        VarKind::Validation => VaKind::Validation,
        VarKind::Authentication | VarKind::Both => VaKind::Authentication,
    };
    let mut spec = ChallengeSpec::new(kind, Visibility::Open);
    spec.deadline_days = deadline_days;
    let mut session = start_session(chain, verifier_key_id, &var.target_key_id, spec, now, min_bits, rng)?;
    session.var_ref = Some(*var_id);
    Ok(session)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VarStatistics {
    pub total: usize,
    pub open: usize,
    pub fulfilled: usize,
    pub failed: usize,
    pub expired: usize,
    /// Documented verification results per target key.
    pub per_key: BTreeMap<Digest, usize>,
}

pub fn var_statistics(chain: &Chain, params: &SelectionParams) -> VarStatistics {
    let mut stats = VarStatistics::default();
    for (_, r) in chain.vars() {
        let Record::Var(v) = r else { continue };
        stats.total += 1;
        match var_status(chain, v, params) {
            VarStatus::Open => stats.open += 1,
            VarStatus::Fulfilled => stats.fulfilled += 1,
            VarStatus::Failed => stats.failed += 1,
            VarStatus::Expired => stats.expired += 1,
        }
    }
    for (_, r) in chain.results() {
        if let Record::VaResult(v) = r {
            *stats.per_key.entry(v.target_key_id).or_default() += 1;
        }
    }
    stats
}

/// Mines the next block: the VARs owed for the current tip followed by
/// `pending`. Returns `None` when there is nothing to mine.
pub fn mine_next(
    chain: &mut Chain,
    pending: Vec<Record>,
    params: &SelectionParams,
    timestamp: Day,
) -> Result<Option<u64>, ChainError> {
    let mut records: Vec<Record> = generate_vars(chain, chain.tip(), params)
        .into_iter()
        .filter(|v| find_var(chain, &v.var_id).is_none())
        .map(Record::Var)
        .collect();
    records.extend(pending);
    if records.is_empty() {
        return Ok(None);
    }
    let block = chain.mine_block(records, timestamp)?;
    let height = block.height;
    chain.append_block(block)?;
    Ok(Some(height))
}
