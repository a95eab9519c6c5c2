use std::collections::HashMap;

use crate::crypto::Digest;
use crate::records::Record;

/// Position of a record: block height and index within the block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Loc {
    pub height: u64,
    pub pos: u32,
}

/// Lookup tables derived from chain contents. Every list is kept in chain
/// order because records are only ever appended.
#[derive(Debug, Default, Clone)]
pub struct ChainIndex {
    pub(crate) by_record_id: HashMap<Digest, Loc>,
    pub(crate) by_logical_id: HashMap<Digest, Vec<Loc>>,
    pub(crate) by_key: HashMap<Digest, Vec<Loc>>,
    pub(crate) by_session: HashMap<Digest, Vec<Loc>>,
    pub(crate) by_var: HashMap<Digest, Vec<Loc>>,
    pub(crate) keys: HashMap<Digest, Loc>,
    pub(crate) key_order: Vec<Digest>,
    pub(crate) revocations: HashMap<Digest, Vec<Loc>>,
    pub(crate) responses_by_challenge: HashMap<Digest, Vec<Loc>>,
    pub(crate) results_by_challenge: HashMap<Digest, Vec<Loc>>,
    pub(crate) signatures_by_result: HashMap<Digest, Vec<Loc>>,
    pub(crate) vars: Vec<Loc>,
    pub(crate) signatures: Vec<Loc>,
    pub(crate) results: Vec<Loc>,
}

impl ChainIndex {
    pub(crate) fn insert(&mut self, loc: Loc, record: &Record) {
        self.by_record_id.insert(record.record_id(), loc);
        self.by_logical_id.entry(record.id()).or_default().push(loc);
        for key in record.involved_keys() {
            self.by_key.entry(key).or_default().push(loc);
        }
        match record {
            Record::PublicKey(r) => {
                if self.keys.insert(r.key_id, loc).is_none() {
                    self.key_order.push(r.key_id);
                }
            }
            Record::Challenge(r) => {
                self.by_session.entry(r.session_id).or_default().push(loc);
                if let Some(var) = r.var_ref {
                    self.by_var.entry(var).or_default().push(loc);
                }
            }
            Record::Response(r) => {
                self.responses_by_challenge.entry(r.challenge_id).or_default().push(loc);
            }
            Record::VaResult(r) => {
                self.by_session.entry(r.session_id).or_default().push(loc);
                self.results_by_challenge.entry(r.challenge_id).or_default().push(loc);
                self.results.push(loc);
            }
            Record::Signature(r) => {
                self.signatures_by_result.entry(r.result_ref).or_default().push(loc);
                self.signatures.push(loc);
            }
            Record::Revocation(r) => {
                self.revocations.entry(r.target_id).or_default().push(loc);
            }
            Record::Var(_) => self.vars.push(loc),
        }
    }
}
