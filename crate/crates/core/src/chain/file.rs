//! Chain file: `"ACHN" ‖ version (1) ‖ difficulty (1) ‖ block count (4 BE) ‖ blocks`.
//!
//! Each block is `height (8) ‖ prev_hash (32) ‖ merkle_root (32) ‖
//! timestamp (4) ‖ nonce (8) ‖ block_hash (32) ‖ record count (4)` followed by
//! every record as `length (4) ‖ canonical bytes`. All integers big-endian.

use std::fs;
use std::path::Path;

use crate::codec::{CodecError, Reader, Writer};
use crate::records::read_record;

use super::{replay, AuditReport, Block, Chain, ChainError};

pub const FILE_MAGIC: &[u8; 4] = b"ACHN";
pub const FILE_VERSION: u8 = 1;

fn corrupt(height: u64, reason: impl ToString) -> ChainError {
    ChainError::CorruptFile { first_bad_height: height, reason: reason.to_string() }
}

fn write_block(w: &mut Writer, b: &Block) {
    w.u64(b.height)
        .digest(&b.prev_hash)
        .digest(&b.merkle_root)
        .u32(b.timestamp)
        .u64(b.nonce)
        .digest(&b.block_hash)
        .u32(b.records.len() as u32);
    for r in &b.records {
        w.bytes(&r.to_bytes());
    }
}

fn read_block(r: &mut Reader<'_>) -> Result<Block, CodecError> {
    let height = r.u64()?;
    let prev_hash = r.digest()?;
    let merkle_root = r.digest()?;
    let timestamp = r.u32()?;
    let nonce = r.u64()?;
    let block_hash = r.digest()?;
    let count = r.u32()? as usize;
    let mut records = Vec::with_capacity(count.min(r.remaining()));
    for _ in 0..count {
        let len = r.u32()? as usize;
        let mut inner = Reader::new(r.take(len)?);
        records.push(read_record(&mut inner)?);
        inner.finish()?;
    }
    Ok(Block { height, prev_hash, merkle_root, timestamp, nonce, records, block_hash })
}

impl Chain {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(FILE_MAGIC).u8(FILE_VERSION).u8(self.difficulty).u32(self.blocks.len() as u32);
        for b in &self.blocks {
            write_block(&mut w, b);
        }
        w.into_bytes()
    }

    /// Parses and fully re-validates a chain file.
    pub fn from_bytes(bytes: &[u8]) -> Result<Chain, ChainError> {
        let mut r = Reader::new(bytes);
        let header = (|| -> Result<(u8, u32), CodecError> {
            if r.take(4)? != FILE_MAGIC {
                return Err(CodecError::InvalidTag { what: "magic", tag: 0 });
            }
            let version = r.u8()?;
            if version != FILE_VERSION {
                return Err(CodecError::InvalidTag { what: "version", tag: version });
            }
            Ok((r.u8()?, r.u32()?))
        })();
        let (difficulty, count) = header.map_err(|e| corrupt(0, format!("header: {e}")))?;

        let mut blocks = Vec::new();
        for i in 0..count as u64 {
            if r.remaining() == 0 {
                return Err(corrupt(0, format!("header declares {count} blocks, file holds {i}")));
            }
            match read_block(&mut r) {
                Ok(block) => blocks.push(block),
                Err(e) => {
                    // A damaged length field can make an earlier block parse
                    // short; blame the earliest block that fails validation.
                    let (_, report) = replay(difficulty, blocks);
                    let height = report.first_bad_height.unwrap_or(i);
                    return Err(corrupt(height, format!("block {i}: {e}")));
                }
            }
        }
        if r.remaining() != 0 {
            return Err(corrupt(0, format!("{} bytes beyond the declared {count} blocks", r.remaining())));
        }

        let (chain, report) = replay(difficulty, blocks);
        match report.first_bad_height {
            None => Ok(chain),
            Some(h) => Err(corrupt(h, report.reasons.join("; "))),
        }
    }

    /// Audits raw chain-file bytes. Parse failures become invalid reports.
    pub fn audit_bytes(bytes: &[u8]) -> AuditReport {
        match Chain::from_bytes(bytes) {
            Ok(chain) => super::verify_chain(&chain),
            Err(e) => AuditReport {
                valid: false,
                first_bad_height: Some(e.height().unwrap_or(0)),
                reasons: vec![e.to_string()],
            },
        }
    }

    pub fn persist(&self, path: &Path) -> Result<(), ChainError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Chain, ChainError> {
        Chain::from_bytes(&fs::read(path)?)
    }
}
