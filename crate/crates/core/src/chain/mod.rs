//! Append-only proof-of-work chain of records.
//!
//! A single node's view: blocks are mined locally with a deterministic nonce
//! search and appended after full validation. There is no fork choice and no
//! difficulty retargeting.

mod file;
mod index;
mod validate;

use std::io;

use crate::codec::Writer;
use crate::crypto::{hash, hash_parts, Digest};
use crate::records::{Day, PublicKeyRecord, Record};

pub use file::{FILE_MAGIC, FILE_VERSION};
pub use index::{ChainIndex, Loc};
pub use validate::RecordRejection;

use validate::State;

/// Default proof-of-work difficulty in leading zero bits.
pub const DEFAULT_DIFFICULTY: u8 = 8;

#[derive(Debug, thiserror::Error)]
pub enum ChainError {
    #[error("no pending records to mine")]
    EmptyPending,
    #[error("invalid record {record_id} at height {height}: {reason}")]
    InvalidRecord { height: u64, record_id: Digest, reason: RecordRejection },
    #[error("block {height} does not link to the chain tip")]
    BrokenLink { height: u64 },
    #[error("expected block height {expected}, found {found}")]
    BadHeight { expected: u64, found: u64 },
    #[error("block {height} lacks the required proof of work")]
    InsufficientWork { height: u64 },
    #[error("block {height} hash does not match its header")]
    HashMismatch { height: u64 },
    #[error("block {height} merkle root does not match its records")]
    MerkleMismatch { height: u64 },
    #[error("block {height} timestamp precedes its predecessor")]
    TimestampRegression { height: u64 },
    #[error("block {height} carries no records")]
    EmptyBlock { height: u64 },
    #[error("chain file i/o: {0}")]
    Io(#[from] io::Error),
    #[error("corrupt chain file at block {first_bad_height}: {reason}")]
    CorruptFile { first_bad_height: u64, reason: String },
}

impl ChainError {
    /// Height of the offending block, when the error concerns one.
    pub fn height(&self) -> Option<u64> {
        match self {
            ChainError::InvalidRecord { height, .. }
            | ChainError::BrokenLink { height }
            | ChainError::InsufficientWork { height }
            | ChainError::HashMismatch { height }
            | ChainError::MerkleMismatch { height }
            | ChainError::TimestampRegression { height }
            | ChainError::EmptyBlock { height } => Some(*height),
            ChainError::BadHeight { expected, .. } => Some(*expected),
            ChainError::CorruptFile { first_bad_height, .. } => Some(*first_bad_height),
            ChainError::EmptyPending | ChainError::Io(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub height: u64,
    pub prev_hash: Digest,
    pub merkle_root: Digest,
    pub timestamp: Day,
    pub nonce: u64,
    pub records: Vec<Record>,
    pub block_hash: Digest,
}

impl Block {
    /// `hash(height ‖ prev_hash ‖ merkle_root ‖ timestamp ‖ nonce)`.
    pub fn header_hash(&self) -> Digest {
        header_hash(self.height, &self.prev_hash, &self.merkle_root, self.timestamp, self.nonce)
    }

    /// Hash of the concatenated record ids. The genesis root is additionally
    /// bound to the chain difficulty so that the file header cannot lower it.
    pub fn merkle_root_for(height: u64, difficulty: u8, records: &[Record]) -> Digest {
        let mut w = Writer::new();
        if height == 0 {
            w.raw(b"ACHN-genesis").u8(difficulty);
        }
        for r in records {
            w.digest(&r.record_id());
        }
        hash(&w.into_bytes())
    }
}

fn header_hash(height: u64, prev: &Digest, merkle: &Digest, timestamp: Day, nonce: u64) -> Digest {
    hash_parts(&[
        &height.to_be_bytes(),
        prev.as_bytes(),
        merkle.as_bytes(),
        &timestamp.to_be_bytes(),
        &nonce.to_be_bytes(),
    ])
}

/// Result of [`verify_chain`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditReport {
    pub valid: bool,
    pub first_bad_height: Option<u64>,
    pub reasons: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Chain {
    difficulty: u8,
    blocks: Vec<Block>,
    index: ChainIndex,
}

impl PartialEq for Chain {
    fn eq(&self, other: &Self) -> bool {
        self.difficulty == other.difficulty && self.blocks == other.blocks
    }
}

impl Eq for Chain {}

impl Chain {
    /// Mines a genesis block holding `founders` (possibly none).
    pub fn new(difficulty: u8, timestamp: Day, founders: Vec<Record>) -> Result<Self, ChainError> {
        let mut chain = Self { difficulty, blocks: Vec::new(), index: ChainIndex::default() };
        let genesis = chain.build_block(founders, timestamp, true)?;
        chain.append_block(genesis)?;
        Ok(chain)
    }

    /// Wraps blocks without validating them. Used to audit untrusted input.
    pub fn from_blocks_unchecked(difficulty: u8, blocks: Vec<Block>) -> Self {
        let mut index = ChainIndex::default();
        for b in &blocks {
            for (pos, r) in b.records.iter().enumerate() {
                index.insert(Loc { height: b.height, pos: pos as u32 }, r);
            }
        }
        Self { difficulty, blocks, index }
    }

    pub fn difficulty(&self) -> u8 {
        self.difficulty
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn into_blocks(self) -> Vec<Block> {
        self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn tip(&self) -> &Block {
        self.blocks.last().expect("a chain always has a genesis block")
    }

    pub fn index(&self) -> &ChainIndex {
        &self.index
    }

    pub fn record_at(&self, loc: Loc) -> &Record {
        &self.blocks[loc.height as usize].records[loc.pos as usize]
    }

    pub fn timestamp_at(&self, height: u64) -> Day {
        self.blocks[height as usize].timestamp
    }

    /// Every record with its location, in chain order.
    pub fn records(&self) -> impl Iterator<Item = (Loc, &Record)> {
        self.blocks.iter().flat_map(|b| {
            b.records.iter().enumerate().map(move |(pos, r)| (Loc { height: b.height, pos: pos as u32 }, r))
        })
    }

    pub(crate) fn resolve<'a>(&'a self, locs: Option<&'a Vec<Loc>>) -> impl Iterator<Item = (Loc, &'a Record)> + 'a {
        locs.into_iter().flatten().map(move |l| (*l, self.record_at(*l)))
    }

    /// Registration record of a key and the location it was registered at.
    pub fn key_record(&self, key_id: &Digest) -> Option<(Loc, &PublicKeyRecord)> {
        let loc = *self.index.keys.get(key_id)?;
        match self.record_at(loc) {
            Record::PublicKey(k) => Some((loc, k)),
            _ => None,
        }
    }

    /// All registered keys in registration order.
    pub fn keys(&self) -> impl Iterator<Item = (Loc, &PublicKeyRecord)> {
        self.index.key_order.iter().filter_map(|id| self.key_record(id))
    }

    /// Records involving a key, in chain order.
    pub fn records_for_key(&self, key_id: &Digest) -> impl Iterator<Item = (Loc, &Record)> {
        self.resolve(self.index.by_key.get(key_id))
    }

    /// Records carrying the given logical id (all posted copies).
    pub fn records_by_id(&self, id: &Digest) -> impl Iterator<Item = (Loc, &Record)> {
        self.resolve(self.index.by_logical_id.get(id))
    }

    /// Challenges and results of a session, in chain order.
    pub fn session_records(&self, session_id: &Digest) -> impl Iterator<Item = (Loc, &Record)> {
        self.resolve(self.index.by_session.get(session_id))
    }

    pub fn responses_to(&self, challenge_id: &Digest) -> impl Iterator<Item = (Loc, &Record)> {
        self.resolve(self.index.responses_by_challenge.get(challenge_id))
    }

    pub fn results_for(&self, challenge_id: &Digest) -> impl Iterator<Item = (Loc, &Record)> {
        self.resolve(self.index.results_by_challenge.get(challenge_id))
    }

    /// Revocations targeting a key id or signature id.
    pub fn revocations_of(&self, target_id: &Digest) -> impl Iterator<Item = (Loc, &Record)> {
        self.resolve(self.index.revocations.get(target_id))
    }

    /// Challenges that reference a VAR.
    pub fn challenges_for_var(&self, var_id: &Digest) -> impl Iterator<Item = (Loc, &Record)> {
        self.resolve(self.index.by_var.get(var_id))
    }

    pub fn vars(&self) -> impl Iterator<Item = (Loc, &Record)> {
        self.resolve(Some(&self.index.vars))
    }

    pub fn signatures(&self) -> impl Iterator<Item = (Loc, &Record)> {
        self.resolve(Some(&self.index.signatures))
    }

    pub fn results(&self) -> impl Iterator<Item = (Loc, &Record)> {
        self.resolve(Some(&self.index.results))
    }

    /// Mines the next block over `pending` at `timestamp`.
    ///
    /// Records are checked in order against the chain and the records before
    /// them in the same batch. The nonce search starts at zero.
    pub fn mine_block(&self, pending: Vec<Record>, timestamp: Day) -> Result<Block, ChainError> {
        if pending.is_empty() {
            return Err(ChainError::EmptyPending);
        }
        self.build_block(pending, timestamp, false)
    }

    fn build_block(&self, records: Vec<Record>, timestamp: Day, genesis: bool) -> Result<Block, ChainError> {
        let height = self.blocks.len() as u64;
        debug_assert_eq!(genesis, height == 0);
        let prev_hash = self.blocks.last().map(|b| b.block_hash).unwrap_or(Digest::ZERO);
        if let Some(prev) = self.blocks.last() {
            if timestamp < prev.timestamp {
                return Err(ChainError::TimestampRegression { height });
            }
        }
        self.check_records(height, &records, timestamp)?;

        let merkle_root = Block::merkle_root_for(height, self.difficulty, &records);
        let mut nonce = 0u64;
        let block_hash = loop {
            let h = header_hash(height, &prev_hash, &merkle_root, timestamp, nonce);
            if h.leading_zero_bits() >= self.difficulty as u32 {
                break h;
            }
            nonce += 1;
        };
        Ok(Block { height, prev_hash, merkle_root, timestamp, nonce, records, block_hash })
    }

    fn check_records(&self, height: u64, records: &[Record], timestamp: Day) -> Result<(), ChainError> {
        let mut state = State::new(self, timestamp);
        for record in records {
            state.check(record).map_err(|reason| ChainError::InvalidRecord {
                height,
                record_id: record.record_id(),
                reason,
            })?;
            state.accept(record);
        }
        Ok(())
    }

    /// Validates `block` against the tip and appends it.
    pub fn append_block(&mut self, block: Block) -> Result<(), ChainError> {
        let expected = self.blocks.len() as u64;
        if block.height != expected {
            return Err(ChainError::BadHeight { expected, found: block.height });
        }
        let height = block.height;
        let prev_hash = self.blocks.last().map(|b| b.block_hash).unwrap_or(Digest::ZERO);
        if block.prev_hash != prev_hash {
            return Err(ChainError::BrokenLink { height });
        }
        if let Some(prev) = self.blocks.last() {
            if block.timestamp < prev.timestamp {
                return Err(ChainError::TimestampRegression { height });
            }
        }
        if height > 0 && block.records.is_empty() {
            return Err(ChainError::EmptyBlock { height });
        }
        let recomputed = block.header_hash();
        if recomputed.leading_zero_bits() < self.difficulty as u32 {
            return Err(ChainError::InsufficientWork { height });
        }
        if recomputed != block.block_hash {
            return Err(ChainError::HashMismatch { height });
        }
        if Block::merkle_root_for(height, self.difficulty, &block.records) != block.merkle_root {
            return Err(ChainError::MerkleMismatch { height });
        }
        self.check_records(height, &block.records, block.timestamp)?;

        for (pos, r) in block.records.iter().enumerate() {
            self.index.insert(Loc { height, pos: pos as u32 }, r);
        }
        self.blocks.push(block);
        Ok(())
    }

    /// Matching records from blocks stamped within `[now - window_days, now]`,
    /// in chain order.
    pub fn traverse(
        &self,
        window_days: Day,
        now: Day,
        mut predicate: impl FnMut(&Record) -> bool,
    ) -> Vec<(&Record, u64)> {
        assert!(window_days > 0, "window must be positive");
        let start = now.saturating_sub(window_days);
        let first = self.blocks.partition_point(|b| b.timestamp < start);
        self.blocks[first..]
            .iter()
            .take_while(|b| b.timestamp <= now)
            .flat_map(|b| b.records.iter().map(move |r| (r, b.height)))
            .filter(|(r, _)| predicate(r))
            .collect()
    }
}

/// Replays every block into a fresh chain, reporting the first failure.
///
/// Once block `k` fails, every later block is unverifiable because it
/// commits to `k` through the hash links.
pub fn verify_chain(chain: &Chain) -> AuditReport {
    replay(chain.difficulty, chain.blocks.iter().cloned()).1
}

pub(crate) fn replay(difficulty: u8, blocks: impl IntoIterator<Item = Block>) -> (Chain, AuditReport) {
    let blocks: Vec<Block> = blocks.into_iter().collect();
    let total = blocks.len() as u64;
    let mut fresh = Chain { difficulty, blocks: Vec::new(), index: ChainIndex::default() };
    if blocks.is_empty() {
        let report =
            AuditReport { valid: false, first_bad_height: Some(0), reasons: vec!["chain has no genesis block".into()] };
        return (fresh, report);
    }
    for (i, block) in blocks.into_iter().enumerate() {
        if let Err(e) = fresh.append_block(block) {
            let k = i as u64;
            let mut reasons = vec![format!("height {k}: {e}")];
            if k + 1 < total {
                reasons.push(format!("heights {}..={} unverifiable", k + 1, total - 1));
            }
            return (fresh, AuditReport { valid: false, first_bad_height: Some(k), reasons });
        }
    }
    (fresh, AuditReport { valid: true, first_bad_height: None, reasons: Vec::new() })
}

#[cfg(test)]
mod tests;
