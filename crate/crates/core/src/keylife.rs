//! Formal key validation, key status, revocation, lookup and history.

use std::collections::HashSet;

use crate::chain::{Chain, Loc};
use crate::crypto::{self, CryptoError, Digest, KeyMaterial};
use crate::records::{Day, PublicKeyRecord, Record, RevocationKind, RevocationRecord, MAX_LIFESPAN_DAYS};

/// Minimum key length accepted by formal validation unless configured otherwise.
pub const DEFAULT_MIN_BITS: u32 = 2048;

/// Lookups only traverse blocks stamped within this many days of `now`.
pub const LOOKUP_WINDOW_DAYS: Day = MAX_LIFESPAN_DAYS;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum KeylifeError {
    #[error("issuer is not authorized to revoke this item")]
    NotAuthorized,
    #[error("unknown key {0}")]
    UnknownKey(Digest),
    #[error("unknown signature {0}")]
    UnknownSignature(Digest),
    #[error("lookup query needs at least one field")]
    EmptyQuery,
    #[error(transparent)]
    Crypto(#[from] CryptoError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FormalChecks {
    pub well_formed: bool,
    pub length_sufficient: bool,
    pub not_expired: bool,
    pub not_revoked: bool,
}

impl FormalChecks {
    pub fn all(&self) -> bool {
        self.well_formed && self.length_sufficient && self.not_expired && self.not_revoked
    }

    /// Names of the checks that did not pass.
    pub fn failing(&self) -> Vec<&'static str> {
        [
            ("well_formed", self.well_formed),
            ("length_sufficient", self.length_sufficient),
            ("not_expired", self.not_expired),
            ("not_revoked", self.not_revoked),
        ]
        .into_iter()
        .filter(|(_, ok)| !ok)
        .map(|(name, _)| name)
        .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FormalValidationResult {
    pub key_id: Digest,
    pub passed: bool,
    pub checks: FormalChecks,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KeyStatus {
    Valid,
    Expired,
    Revoked,
    Unknown,
}

impl KeyStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            KeyStatus::Valid => "valid",
            KeyStatus::Expired => "expired",
            KeyStatus::Revoked => "revoked",
            KeyStatus::Unknown => "unknown",
        }
    }
}

impl std::fmt::Display for KeyStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// True if a revocation of `target_id` of the given kind sits in a block
/// stamped at or before `now`.
pub fn revoked_at(chain: &Chain, target_id: &Digest, kind: RevocationKind, now: Day) -> bool {
    chain.revocations_of(target_id).any(|(loc, r)| {
        matches!(r, Record::Revocation(rev) if rev.kind == kind) && chain.timestamp_at(loc.height) <= now
    })
}

pub fn formal_validate(chain: &Chain, key_id: &Digest, now: Day, min_bits: u32) -> FormalValidationResult {
    let Some((_, key)) = chain.key_record(key_id) else {
        return FormalValidationResult { key_id: *key_id, passed: false, checks: FormalChecks::default() };
    };
    let material = key.key_material();
    let checks = FormalChecks {
        well_formed: Record::PublicKey(key.clone()).check_invariants().is_ok()
            && key.scheme.provider().check_public(&material).is_ok(),
        length_sufficient: key.key_length_bits >= min_bits,
        not_expired: now < key.expires_at,
        not_revoked: !revoked_at(chain, key_id, RevocationKind::Key, now),
    };
    FormalValidationResult { key_id: *key_id, passed: checks.all(), checks }
}

/// Revocation wins over expiry; expiry is exclusive.
pub fn key_status(chain: &Chain, key_id: &Digest, now: Day) -> KeyStatus {
    match chain.key_record(key_id) {
        None => KeyStatus::Unknown,
        Some(_) if revoked_at(chain, key_id, RevocationKind::Key, now) => KeyStatus::Revoked,
        Some((_, k)) if now >= k.expires_at => KeyStatus::Expired,
        Some(_) => KeyStatus::Valid,
    }
}

fn same_key(a: &KeyMaterial, b: &PublicKeyRecord) -> bool {
    a.scheme == b.scheme && a.public_bytes == b.public_bytes
}

fn build_revocation(
    kind: RevocationKind,
    target_id: Digest,
    issuer_key_id: Digest,
    issuer: &KeyMaterial,
    now: Day,
) -> Result<RevocationRecord, KeylifeError> {
    let mut rec = RevocationRecord {
        revocation_id: Digest::ZERO,
        kind,
        target_id,
        issuer_key_id,
        issuer_signature: Vec::new(),
        created_at: now,
    };
    rec.issuer_signature = crypto::sign(issuer, &rec.signing_message())?;
    rec.revocation_id = rec.computed_id();
    Ok(rec)
}

/// Builds a self-signed key revocation certificate.
pub fn revoke_key(
    chain: &Chain,
    key_id: &Digest,
    issuer: &KeyMaterial,
    now: Day,
) -> Result<RevocationRecord, KeylifeError> {
    let (_, key) = chain.key_record(key_id).ok_or(KeylifeError::UnknownKey(*key_id))?;
    if !same_key(issuer, key) {
        return Err(KeylifeError::NotAuthorized);
    }
    build_revocation(RevocationKind::Key, *key_id, *key_id, issuer, now)
}

/// Builds a signature revocation; only the original signer may issue it.
pub fn revoke_signature(
    chain: &Chain,
    signature_id: &Digest,
    issuer: &KeyMaterial,
    now: Day,
) -> Result<RevocationRecord, KeylifeError> {
    let signer = chain
        .records_by_id(signature_id)
        .find_map(|(_, r)| match r {
            Record::Signature(s) => Some(s.signer_key_id),
            _ => None,
        })
        .ok_or(KeylifeError::UnknownSignature(*signature_id))?;
    let (_, signer_key) = chain.key_record(&signer).ok_or(KeylifeError::UnknownKey(signer))?;
    if !same_key(issuer, signer_key) {
        return Err(KeylifeError::NotAuthorized);
    }
    build_revocation(RevocationKind::Signature, *signature_id, signer, issuer, now)
}

/// A signature counts while it is unexpired and not revoked as of `now`.
pub fn signature_active(chain: &Chain, sig: &crate::records::SignatureRecord, now: Day) -> bool {
    now < sig.expires_at && !revoked_at(chain, &sig.signature_id, RevocationKind::Signature, now)
}

/// Most recently registered key with exactly these public bytes.
pub fn find_key_by_public<'a>(chain: &'a Chain, key: &KeyMaterial) -> Option<&'a PublicKeyRecord> {
    chain.keys().filter(|(_, k)| same_key(key, k)).map(|(_, k)| k).last()
}

/// Exact-match lookup fields; every present field must match.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LookupQuery {
    pub email: Option<String>,
    pub name: Option<String>,
    pub key_id: Option<Digest>,
}

impl LookupQuery {
    pub fn is_empty(&self) -> bool {
        self.email.is_none() && self.name.is_none() && self.key_id.is_none()
    }

    pub fn matches(&self, key: &PublicKeyRecord) -> bool {
        use crate::records::IdentifierKind;
        self.email
            .as_ref()
            .is_none_or(|e| key.owner.identifier_kind == IdentifierKind::Email && &key.owner.identifier == e)
            && self.name.as_ref().is_none_or(|n| &key.owner.display_name == n)
            && self.key_id.as_ref().is_none_or(|id| &key.key_id == id)
    }
}

/// Keys matching `query` registered in blocks stamped within the trailing
/// twelve months, in chain order, with their status at `now`.
pub fn lookup_key(
    chain: &Chain,
    query: &LookupQuery,
    now: Day,
) -> Result<Vec<(PublicKeyRecord, KeyStatus)>, KeylifeError> {
    if query.is_empty() {
        return Err(KeylifeError::EmptyQuery);
    }
    Ok(chain
        .traverse(LOOKUP_WINDOW_DAYS, now, |r| matches!(r, Record::PublicKey(k) if query.matches(k)))
        .into_iter()
        .filter_map(|(r, _)| match r {
            Record::PublicKey(k) => Some((k.clone(), key_status(chain, &k.key_id, now))),
            _ => None,
        })
        .collect())
}

/// Challenges, responses, results, signatures and revocations involving a
/// key, in chain order.
///
/// Each logical record appears once even when both parties posted it.
/// Revoked signatures are left out; their revocation records are kept.
pub fn history<'a>(chain: &'a Chain, key_id: &Digest) -> Vec<(Loc, &'a Record)> {
    let mut locs: Vec<Loc> = Vec::new();
    let mut challenges = Vec::new();
    for (loc, r) in chain.records_for_key(key_id) {
        match r {
            Record::Challenge(c) => {
                challenges.push(c.challenge_id);
                locs.push(loc);
            }
            Record::VaResult(_) | Record::Revocation(_) => locs.push(loc),
            Record::Signature(s) => {
                if chain.revocations_of(&s.signature_id).next().is_none() {
                    locs.push(loc);
                }
                for (rloc, _) in chain.revocations_of(&s.signature_id) {
                    locs.push(rloc);
                }
            }
            Record::PublicKey(_) | Record::Response(_) | Record::Var(_) => {}
        }
    }
    challenges.sort();
    challenges.dedup();
    for c in &challenges {
        locs.extend(chain.responses_to(c).map(|(l, _)| l));
    }
    locs.sort();
    locs.dedup();

    let mut seen = HashSet::new();
    locs.into_iter().map(|l| (l, chain.record_at(l))).filter(|(_, r)| seen.insert(r.id())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{generate_keypair, SchemeId};
    use crate::records::EntityDescriptor;
    use proptest::prelude::*;

    fn key(seed: u64, bits: u32) -> KeyMaterial {
        generate_keypair(SchemeId::ToyDeterministic, seed, bits).unwrap()
    }

    fn register(name: &str, email: &str, k: &KeyMaterial, created: Day) -> PublicKeyRecord {
        PublicKeyRecord::new(EntityDescriptor::email(name, email), k, created, created + 365).unwrap()
    }

    #[test]
    fn formal_validation_checks() {
        let (a, b) = (key(1, 2048), key(2, 1024));
        let (ra, rb) = (register("A", "a@x.org", &a, 0), register("B", "b@x.org", &b, 0));
        let mut chain = Chain::new(4, 0, vec![ra.clone().into(), rb.clone().into()]).unwrap();

        let ok = formal_validate(&chain, &ra.key_id, 10, DEFAULT_MIN_BITS);
        assert!(ok.passed);
        let short = formal_validate(&chain, &rb.key_id, 10, DEFAULT_MIN_BITS);
        assert_eq!(short.checks.failing(), vec!["length_sufficient"]);
        let late = formal_validate(&chain, &ra.key_id, 366, DEFAULT_MIN_BITS);
        assert!(!late.checks.not_expired && !late.passed);

        let rev = revoke_key(&chain, &ra.key_id, &a, 20).unwrap();
        let block = chain.mine_block(vec![rev.into()], 20).unwrap();
        chain.append_block(block).unwrap();
        assert!(formal_validate(&chain, &ra.key_id, 19, DEFAULT_MIN_BITS).passed);
        let revoked = formal_validate(&chain, &ra.key_id, 20, DEFAULT_MIN_BITS);
        assert_eq!(revoked.checks.failing(), vec!["not_revoked"]);

        let unknown = formal_validate(&chain, &Digest::ZERO, 10, DEFAULT_MIN_BITS);
        assert_eq!(unknown.checks, FormalChecks::default());
    }

    #[test]
    fn status_precedence_and_boundary() {
        let a = key(1, 2048);
        let ra = register("A", "a@x.org", &a, 0);
        let mut chain = Chain::new(4, 0, vec![ra.clone().into()]).unwrap();
        assert_eq!(key_status(&chain, &ra.key_id, 364), KeyStatus::Valid);
        assert_eq!(key_status(&chain, &ra.key_id, 365), KeyStatus::Expired);
        assert_eq!(key_status(&chain, &Digest::ZERO, 5), KeyStatus::Unknown);

        let rev = revoke_key(&chain, &ra.key_id, &a, 100).unwrap();
        let block = chain.mine_block(vec![rev.into()], 100).unwrap();
        chain.append_block(block).unwrap();
        assert_eq!(key_status(&chain, &ra.key_id, 400), KeyStatus::Revoked);
    }

    #[test]
    fn revocation_authority() {
        let (a, b) = (key(1, 2048), key(2, 2048));
        let ra = register("A", "a@x.org", &a, 0);
        let chain = Chain::new(4, 0, vec![ra.clone().into()]).unwrap();
        assert_eq!(revoke_key(&chain, &ra.key_id, &b, 1), Err(KeylifeError::NotAuthorized));
        assert_eq!(revoke_key(&chain, &Digest::ZERO, &a, 1), Err(KeylifeError::UnknownKey(Digest::ZERO)));
        assert_eq!(revoke_signature(&chain, &Digest::ZERO, &a, 1), Err(KeylifeError::UnknownSignature(Digest::ZERO)));
    }

    #[test]
    fn lookup_rules() {
        let keys: Vec<_> = (0..3).map(|i| key(i, 2048)).collect();
        let r0 = register("Ann", "ann@x.org", &keys[0], 0);
        let mut chain = Chain::new(4, 0, vec![r0.clone().into()]).unwrap();
        let r1 = register("Ann", "ann@x.org", &keys[1], 50);
        let r2 = register("Bob", "bob@x.org", &keys[2], 50);
        let b = chain.mine_block(vec![r1.clone().into(), r2.clone().into()], 50).unwrap();
        chain.append_block(b).unwrap();

        let q = LookupQuery { email: Some("ann@x.org".into()), ..Default::default() };
        let found: Vec<_> = lookup_key(&chain, &q, 60).unwrap().into_iter().map(|(k, _)| k.key_id).collect();
        assert_eq!(found, vec![r0.key_id, r1.key_id]);

        let found = lookup_key(&chain, &q, 400).unwrap();
        assert_eq!(found.len(), 1);
        assert_eq!(found[0].0.key_id, r1.key_id);
        assert_eq!(found[0].1, KeyStatus::Valid);

        let both = LookupQuery { name: Some("Ann".into()), key_id: Some(r2.key_id), ..Default::default() };
        assert!(lookup_key(&chain, &both, 60).unwrap().is_empty());
        assert_eq!(lookup_key(&chain, &LookupQuery::default(), 60), Err(KeylifeError::EmptyQuery));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn short_keys_always_fail_length(bits in 512u32..2048, now in 0u32..400) {
            let k = key(9, bits);
            let r = register("S", "s@x.org", &k, 0);
            let chain = Chain::new(1, 0, vec![r.clone().into()]).unwrap();
            let res = formal_validate(&chain, &r.key_id, now, DEFAULT_MIN_BITS);
            prop_assert!(!res.checks.length_sufficient);
            prop_assert!(!res.passed);
        }

        #[test]
        fn revoked_status_is_monotone(revoke_day in 1u32..300, probes in proptest::collection::vec(0u32..800, 1..20)) {
            let k = key(5, 2048);
            let r = register("M", "m@x.org", &k, 0);
            let mut chain = Chain::new(1, 0, vec![r.clone().into()]).unwrap();
            let rev = revoke_key(&chain, &r.key_id, &k, revoke_day).unwrap();
            let b = chain.mine_block(vec![rev.into()], revoke_day).unwrap();
            chain.append_block(b).unwrap();
            for t in probes {
                let s = key_status(&chain, &r.key_id, t);
                prop_assert_eq!(s == KeyStatus::Revoked, t >= revoke_day);
            }
        }
    }
}
