//! Referential checks for records entering a block.

use crate::crypto::{self, Digest};
use crate::records::{Day, Outcome, PublicKeyRecord, Record, RecordError, RevocationKind, Visibility};

use super::index::{ChainIndex, Loc};
use super::Chain;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RecordRejection {
    #[error(transparent)]
    Invariant(#[from] RecordError),
    #[error("record already on chain")]
    DuplicateRecord,
    #[error("logical id {0} already used")]
    DuplicateId(Digest),
    #[error("unknown key {0}")]
    UnknownKey(Digest),
    #[error("key {0} is revoked or expired")]
    KeyUnusable(Digest),
    #[error("unknown challenge {0}")]
    UnknownChallenge(Digest),
    #[error("unknown result {0}")]
    UnknownResult(Digest),
    #[error("unknown signature {0}")]
    UnknownSignature(Digest),
    #[error("created after the block timestamp")]
    FutureDated,
    #[error("{0}")]
    Inconsistent(&'static str),
    #[error("signature does not verify")]
    BadSignature,
    #[error("issuer is not authorized to revoke this item")]
    NotAuthorized,
    #[error("signatures may only reference successful results")]
    SignatureForFailure,
    #[error("opaque sessions never produce signatures")]
    SignatureForOpaque,
    #[error("signature outlives one of its keys")]
    SignatureOutlivesKey,
    #[error("result already documented for this challenge")]
    DuplicateResult,
    #[error("VAR references block {0}, which is not yet final")]
    VarFromFuture(u64),
}

/// Chain state plus the already-accepted prefix of the block being built.
pub(crate) struct State<'a> {
    chain: &'a Chain,
    pending: Vec<&'a Record>,
    pending_index: ChainIndex,
    height: u64,
    timestamp: Day,
}

impl<'a> State<'a> {
    pub(crate) fn new(chain: &'a Chain, timestamp: Day) -> Self {
        Self { chain, pending: Vec::new(), pending_index: ChainIndex::default(), height: chain.len() as u64, timestamp }
    }

    pub(crate) fn accept(&mut self, record: &'a Record) {
        let loc = Loc { height: self.height, pos: self.pending.len() as u32 };
        self.pending_index.insert(loc, record);
        self.pending.push(record);
    }

    fn get(&self, loc: Loc) -> &'a Record {
        if loc.height == self.height {
            self.pending[loc.pos as usize]
        } else {
            self.chain.record_at(loc)
        }
    }

    fn locs(&self, pick: impl Fn(&ChainIndex) -> Option<&Vec<Loc>>) -> Vec<Loc> {
        let mut out: Vec<Loc> = pick(&self.chain.index).cloned().unwrap_or_default();
        if let Some(more) = pick(&self.pending_index) {
            out.extend(more);
        }
        out
    }

    fn key(&self, key_id: &Digest) -> Result<&'a PublicKeyRecord, RecordRejection> {
        let loc = self
            .chain
            .index
            .keys
            .get(key_id)
            .or_else(|| self.pending_index.keys.get(key_id))
            .ok_or(RecordRejection::UnknownKey(*key_id))?;
        match self.get(*loc) {
            Record::PublicKey(k) => Ok(k),
            _ => unreachable!("key index points at a key record"),
        }
    }

    fn key_revoked(&self, key_id: &Digest) -> bool {
        self.locs(|i| i.revocations.get(key_id))
            .into_iter()
            .any(|loc| matches!(self.get(loc), Record::Revocation(r) if r.kind == RevocationKind::Key))
    }

    /// Registered, unrevoked and not expired at `day`.
    fn usable_key(&self, key_id: &Digest, day: Day) -> Result<&'a PublicKeyRecord, RecordRejection> {
        let key = self.key(key_id)?;
        if self.key_revoked(key_id) || day >= key.expires_at {
            return Err(RecordRejection::KeyUnusable(*key_id));
        }
        Ok(key)
    }

    fn logical(&self, id: &Digest) -> Vec<&'a Record> {
        self.locs(|i| i.by_logical_id.get(id)).into_iter().map(|l| self.get(l)).collect()
    }

    fn challenge(&self, id: &Digest) -> Result<&'a crate::records::ChallengeRecord, RecordRejection> {
        self.logical(id)
            .into_iter()
            .find_map(|r| match r {
                Record::Challenge(c) => Some(c),
                _ => None,
            })
            .ok_or(RecordRejection::UnknownChallenge(*id))
    }

    fn require_fresh_id(&self, id: &Digest) -> Result<(), RecordRejection> {
        if self.logical(id).is_empty() {
            Ok(())
        } else {
            Err(RecordRejection::DuplicateId(*id))
        }
    }

    pub(crate) fn check(&self, record: &Record) -> Result<(), RecordRejection> {
        record.check_invariants()?;
        let rid = record.record_id();
        if self.chain.index.by_record_id.contains_key(&rid) || self.pending_index.by_record_id.contains_key(&rid) {
            return Err(RecordRejection::DuplicateRecord);
        }
        if record.created_at().is_some_and(|d| d > self.timestamp) {
            return Err(RecordRejection::FutureDated);
        }

        match record {
            Record::PublicKey(r) => self.require_fresh_id(&r.key_id)?,
            Record::Challenge(r) => {
                self.usable_key(&r.challenger_key_id, r.created_at)?;
                self.usable_key(&r.target_key_id, r.created_at)?;
                if let Some(var) = r.var_ref {
                    let is_var = self.logical(&var).iter().any(|v| matches!(v, Record::Var(_)));
                    if !is_var {
                        return Err(RecordRejection::Inconsistent("challenge references an unknown VAR"));
                    }
                }
            }
            Record::Response(r) => {
                let challenge = self.challenge(&r.challenge_id)?;
                if r.responder_key_id != challenge.target_key_id {
                    return Err(RecordRejection::Inconsistent("responder is not the challenge target"));
                }
                if r.posted_by != challenge.challenger_key_id && r.posted_by != challenge.target_key_id {
                    return Err(RecordRejection::Inconsistent("response posted by a key outside the session"));
                }
                if r.created_at < challenge.created_at {
                    return Err(RecordRejection::Inconsistent("response predates its challenge"));
                }
                let key = self.key(&r.responder_key_id)?.key_material();
                let msg = crate::records::ResponseRecord::signing_message(&r.challenge_id, &r.payload);
                if !crypto::verify(&key, &msg, &r.responder_signature) {
                    return Err(RecordRejection::BadSignature);
                }
            }
            Record::VaResult(r) => {
                self.require_fresh_id(&r.result_id)?;
                let challenge = self.challenge(&r.challenge_id)?;
                if r.session_id != challenge.session_id
                    || r.verifier_key_id != challenge.challenger_key_id
                    || r.target_key_id != challenge.target_key_id
                {
                    return Err(RecordRejection::Inconsistent("result does not match its challenge"));
                }
                if !self.locs(|i| i.results_by_challenge.get(&r.challenge_id)).is_empty() {
                    return Err(RecordRejection::DuplicateResult);
                }
                let key = self.key(&r.verifier_key_id)?.key_material();
                if !crypto::verify(&key, &r.signing_message(), &r.verifier_signature) {
                    return Err(RecordRejection::BadSignature);
                }
            }
            Record::Signature(r) => {
                self.require_fresh_id(&r.signature_id)?;
                let result = self
                    .logical(&r.result_ref)
                    .into_iter()
                    .find_map(|x| match x {
                        Record::VaResult(v) => Some(v),
                        _ => None,
                    })
                    .ok_or(RecordRejection::UnknownResult(r.result_ref))?;
                if result.outcome != Outcome::Success {
                    return Err(RecordRejection::SignatureForFailure);
                }
                if r.signer_key_id != result.verifier_key_id || r.signee_key_id != result.target_key_id {
                    return Err(RecordRejection::Inconsistent("signature parties differ from the result"));
                }
                if !self.locs(|i| i.signatures_by_result.get(&r.result_ref)).is_empty() {
                    return Err(RecordRejection::Inconsistent("result already has a signature"));
                }
                let challenge = self.challenge(&result.challenge_id)?;
                if challenge.visibility == Visibility::Opaque {
                    return Err(RecordRejection::SignatureForOpaque);
                }
                if challenge.kind != r.kind {
                    return Err(RecordRejection::Inconsistent("signature kind differs from the session kind"));
                }
                let signer = self.key(&r.signer_key_id)?;
                let signee = self.key(&r.signee_key_id)?;
                if r.expires_at > signer.expires_at || r.expires_at > signee.expires_at {
                    return Err(RecordRejection::SignatureOutlivesKey);
                }
                if !crypto::verify(&signer.key_material(), &r.signing_message(), &r.signer_signature) {
                    return Err(RecordRejection::BadSignature);
                }
            }
            Record::Revocation(r) => {
                self.require_fresh_id(&r.revocation_id)?;
                let authority = match r.kind {
                    RevocationKind::Key => {
                        self.key(&r.target_id)?;
                        r.target_id
                    }
                    RevocationKind::Signature => self
                        .logical(&r.target_id)
                        .into_iter()
                        .find_map(|x| match x {
                            Record::Signature(s) => Some(s.signer_key_id),
                            _ => None,
                        })
                        .ok_or(RecordRejection::UnknownSignature(r.target_id))?,
                };
                if r.issuer_key_id != authority {
                    return Err(RecordRejection::NotAuthorized);
                }
                let key = self.key(&r.issuer_key_id)?.key_material();
                if !crypto::verify(&key, &r.signing_message(), &r.issuer_signature) {
                    return Err(RecordRejection::NotAuthorized);
                }
            }
            Record::Var(r) => {
                self.require_fresh_id(&r.var_id)?;
                if r.created_at_block >= self.height {
                    return Err(RecordRejection::VarFromFuture(r.created_at_block));
                }
                let day = self.chain.blocks[r.created_at_block as usize].timestamp;
                self.usable_key(&r.target_key_id, day)?;
            }
        }
        Ok(())
    }
}
