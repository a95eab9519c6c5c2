//! Record types stored on the chain and their canonical serialization.
//!
//! Every record carries a logical identifier (`key_id`, `challenge_id`, ...)
//! equal to the hash of its tag and body with the identifier and the
//! `posted_by` field left out. Both parties of a session post their own copy
//! of challenges and responses; the copies share a logical id but differ in
//! `posted_by`, and therefore in their [`Record::record_id`].

use crate::codec::{CodecError, Reader, Writer};
use crate::crypto::{hash, Digest, KeyMaterial, SchemeId};

/// Logical time: whole days since the scenario epoch.
pub type Day = u32;

/// Upper bound on key and signature lifetimes (twelve months).
pub const MAX_LIFESPAN_DAYS: Day = 365;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RecordError {
    #[error("{record} invariant violated: {reason}")]
    InvariantViolation { record: &'static str, reason: String },
    #[error(transparent)]
    Codec(#[from] CodecError),
}

fn violation(record: &'static str, reason: impl Into<String>) -> RecordError {
    RecordError::InvariantViolation { record, reason: reason.into() }
}

macro_rules! wire_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident = $value:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub enum $name {
            $($variant = $value),+
        }

        impl $name {
            pub fn as_byte(self) -> u8 {
                self as u8
            }

            pub fn from_byte(b: u8) -> Result<Self, CodecError> {
                match b {
                    $($value => Ok(Self::$variant),)+
                    tag => Err(CodecError::InvalidTag { what: stringify!($name), tag }),
                }
            }
        }
    };
}

wire_enum!(IdentifierKind { Email = 0, Domain = 1 });
wire_enum!(
    /// Validation proves control of an account and key; authentication proves
    /// the claimed real-world identity.
    VaKind { Validation = 0, Authentication = 1 }
);
wire_enum!(Visibility { Open = 0, Opaque = 1 });
wire_enum!(Outcome { Success = 0, Failure = 1 });
wire_enum!(FailureReason { NoResponse = 0, BadSignature = 1, Unsatisfactory = 2, Timeout = 3 });
wire_enum!(RevocationKind { Key = 0, Signature = 1 });
wire_enum!(VarKind { Validation = 0, Authentication = 1, Both = 2 });
wire_enum!(VarStatus { Open = 0, Fulfilled = 1, Failed = 2, Expired = 3 });

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EntityDescriptor {
    pub display_name: String,
    pub identifier: String,
    pub identifier_kind: IdentifierKind,
}

impl EntityDescriptor {
    pub fn email(name: &str, email: &str) -> Self {
        Self { display_name: name.into(), identifier: email.into(), identifier_kind: IdentifierKind::Email }
    }

    pub fn domain(name: &str, domain: &str) -> Self {
        Self { display_name: name.into(), identifier: domain.into(), identifier_kind: IdentifierKind::Domain }
    }

    fn check(&self) -> Result<(), RecordError> {
        if self.identifier.is_empty() {
            return Err(violation("EntityDescriptor", "empty identifier"));
        }
        if self.identifier_kind == IdentifierKind::Email && self.identifier.matches('@').count() != 1 {
            return Err(violation("EntityDescriptor", "email must contain exactly one '@'"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PublicKeyRecord {
    pub key_id: Digest,
    pub owner: EntityDescriptor,
    pub scheme: SchemeId,
    pub public_bytes: Vec<u8>,
    pub key_length_bits: u32,
    pub created_at: Day,
    pub expires_at: Day,
}

impl PublicKeyRecord {
    /// Builds the registration record for `key`, computing its key id.
    pub fn new(
        owner: EntityDescriptor,
        key: &KeyMaterial,
        created_at: Day,
        expires_at: Day,
    ) -> Result<Self, RecordError> {
        let mut rec = Self {
            key_id: Digest::ZERO,
            owner,
            scheme: key.scheme,
            public_bytes: key.public_bytes.clone(),
            key_length_bits: key.key_length_bits,
            created_at,
            expires_at,
        };
        rec.key_id = rec.computed_id();
        Record::PublicKey(rec.clone()).check_invariants()?;
        Ok(rec)
    }

    pub fn key_material(&self) -> KeyMaterial {
        KeyMaterial::public_only(self.scheme, self.key_length_bits, self.public_bytes.clone())
    }

    pub fn computed_id(&self) -> Digest {
        logical_id(Tag::PublicKey, |w| encode_key(self, w, View::LOGICAL))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChallengeRecord {
    pub challenge_id: Digest,
    pub session_id: Digest,
    pub var_ref: Option<Digest>,
    pub kind: VaKind,
    pub visibility: Visibility,
    pub challenger_key_id: Digest,
    pub target_key_id: Digest,
    /// Ciphertext under the target's key, additionally sealed with the
    /// session secret for opaque challenges.
    pub payload: Vec<u8>,
    /// Hash of the plaintext a correct response must carry. Lets anyone
    /// check a posted open response against the challenge.
    pub answer_commitment: Digest,
    pub created_at: Day,
    pub posted_by: Digest,
}

impl ChallengeRecord {
    pub fn computed_id(&self) -> Digest {
        logical_id(Tag::Challenge, |w| encode_challenge(self, w, View::LOGICAL))
    }

    /// The same challenge as posted by another party.
    pub fn posted_by(&self, key_id: Digest) -> Self {
        Self { posted_by: key_id, ..self.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResponseRecord {
    pub response_id: Digest,
    pub challenge_id: Digest,
    pub responder_key_id: Digest,
    pub payload: Vec<u8>,
    pub responder_signature: Vec<u8>,
    pub created_at: Day,
    pub posted_by: Digest,
}

impl ResponseRecord {
    pub fn computed_id(&self) -> Digest {
        logical_id(Tag::Response, |w| encode_response(self, w, View::LOGICAL))
    }

    /// Message covered by `responder_signature`: `challenge_id ‖ payload`.
    pub fn signing_message(challenge_id: &Digest, payload: &[u8]) -> Vec<u8> {
        let mut m = challenge_id.as_bytes().to_vec();
        m.extend_from_slice(payload);
        m
    }

    pub fn posted_by(&self, key_id: Digest) -> Self {
        Self { posted_by: key_id, ..self.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VaResultRecord {
    pub result_id: Digest,
    pub session_id: Digest,
    pub challenge_id: Digest,
    pub verifier_key_id: Digest,
    pub target_key_id: Digest,
    pub outcome: Outcome,
    pub failure_reason: Option<FailureReason>,
    pub created_at: Day,
    pub verifier_signature: Vec<u8>,
}

impl VaResultRecord {
    pub fn computed_id(&self) -> Digest {
        logical_id(Tag::VaResult, |w| encode_result(self, w, View::LOGICAL))
    }

    pub fn signing_message(&self) -> Vec<u8> {
        signing_message(Tag::VaResult, |w| encode_result(self, w, View::SIGNING))
    }

    pub fn is_success(&self) -> bool {
        self.outcome == Outcome::Success
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignatureRecord {
    pub signature_id: Digest,
    pub signer_key_id: Digest,
    pub signee_key_id: Digest,
    pub kind: VaKind,
    pub result_ref: Digest,
    pub created_at: Day,
    pub expires_at: Day,
    pub signer_signature: Vec<u8>,
}

impl SignatureRecord {
    pub fn computed_id(&self) -> Digest {
        logical_id(Tag::Signature, |w| encode_signature(self, w, View::LOGICAL))
    }

    pub fn signing_message(&self) -> Vec<u8> {
        signing_message(Tag::Signature, |w| encode_signature(self, w, View::SIGNING))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RevocationRecord {
    pub revocation_id: Digest,
    pub kind: RevocationKind,
    pub target_id: Digest,
    pub issuer_key_id: Digest,
    pub issuer_signature: Vec<u8>,
    pub created_at: Day,
}

impl RevocationRecord {
    pub fn computed_id(&self) -> Digest {
        logical_id(Tag::Revocation, |w| encode_revocation(self, w, View::LOGICAL))
    }

    pub fn signing_message(&self) -> Vec<u8> {
        signing_message(Tag::Revocation, |w| encode_revocation(self, w, View::SIGNING))
    }
}

/// A system-generated validation and authentication request.
///
/// `status` is always [`VarStatus::Open`] on chain; the effective status is
/// derived from later records (see [`crate::var::var_status`]).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VaRecord {
    pub var_id: Digest,
    pub target_key_id: Digest,
    pub kind: VarKind,
    pub created_at_block: u64,
    pub status: VarStatus,
}

impl VaRecord {
    pub fn computed_id(&self) -> Digest {
        logical_id(Tag::Var, |w| encode_var(self, w, View::LOGICAL))
    }
}

wire_enum!(
    /// Leading byte of a serialized record.
    Tag { PublicKey = 1, Challenge = 2, Response = 3, VaResult = 4, Signature = 5, Revocation = 6, Var = 7 }
);

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Record {
    PublicKey(PublicKeyRecord),
    Challenge(ChallengeRecord),
    Response(ResponseRecord),
    VaResult(VaResultRecord),
    Signature(SignatureRecord),
    Revocation(RevocationRecord),
    Var(VaRecord),
}

/// Which optional parts of a body to emit.
#[derive(Clone, Copy)]
struct View {
    id: bool,
    posted_by: bool,
    signature: bool,
}

impl View {
    const FULL: View = View { id: true, posted_by: true, signature: true };
    const RECORD: View = View { id: false, posted_by: true, signature: true };
    const LOGICAL: View = View { id: false, posted_by: false, signature: true };
    const SIGNING: View = View { id: false, posted_by: false, signature: false };
}

fn logical_id(tag: Tag, body: impl FnOnce(&mut Writer)) -> Digest {
    let mut w = Writer::new();
    w.u8(tag.as_byte());
    body(&mut w);
    hash(&w.into_bytes())
}

fn signing_message(tag: Tag, body: impl FnOnce(&mut Writer)) -> Vec<u8> {
    let mut w = Writer::new();
    w.raw(b"authcoin/sign").u8(tag.as_byte());
    body(&mut w);
    w.into_bytes()
}

fn encode_owner(o: &EntityDescriptor, w: &mut Writer) {
    w.str(&o.display_name).str(&o.identifier).u8(o.identifier_kind.as_byte());
}

fn encode_key(r: &PublicKeyRecord, w: &mut Writer, v: View) {
    if v.id {
        w.digest(&r.key_id);
    }
    encode_owner(&r.owner, w);
    w.u8(r.scheme.as_byte()).bytes(&r.public_bytes).u32(r.key_length_bits).u32(r.created_at).u32(r.expires_at);
}

fn encode_challenge(r: &ChallengeRecord, w: &mut Writer, v: View) {
    if v.id {
        w.digest(&r.challenge_id);
    }
    w.digest(&r.session_id)
        .opt_digest(r.var_ref.as_ref())
        .u8(r.kind.as_byte())
        .u8(r.visibility.as_byte())
        .digest(&r.challenger_key_id)
        .digest(&r.target_key_id)
        .bytes(&r.payload)
        .digest(&r.answer_commitment)
        .u32(r.created_at);
    if v.posted_by {
        w.digest(&r.posted_by);
    }
}

fn encode_response(r: &ResponseRecord, w: &mut Writer, v: View) {
    if v.id {
        w.digest(&r.response_id);
    }
    w.digest(&r.challenge_id).digest(&r.responder_key_id).bytes(&r.payload);
    if v.signature {
        w.bytes(&r.responder_signature);
    }
    w.u32(r.created_at);
    if v.posted_by {
        w.digest(&r.posted_by);
    }
}

fn encode_result(r: &VaResultRecord, w: &mut Writer, v: View) {
    if v.id {
        w.digest(&r.result_id);
    }
    w.digest(&r.session_id)
        .digest(&r.challenge_id)
        .digest(&r.verifier_key_id)
        .digest(&r.target_key_id)
        .u8(r.outcome.as_byte());
    match r.failure_reason {
        Some(reason) => w.u8(1).u8(reason.as_byte()),
        None => w.u8(0),
    };
    w.u32(r.created_at);
    if v.signature {
        w.bytes(&r.verifier_signature);
    }
}

fn encode_signature(r: &SignatureRecord, w: &mut Writer, v: View) {
    if v.id {
        w.digest(&r.signature_id);
    }
    w.digest(&r.signer_key_id)
        .digest(&r.signee_key_id)
        .u8(r.kind.as_byte())
        .digest(&r.result_ref)
        .u32(r.created_at)
        .u32(r.expires_at);
    if v.signature {
        w.bytes(&r.signer_signature);
    }
}

fn encode_revocation(r: &RevocationRecord, w: &mut Writer, v: View) {
    if v.id {
        w.digest(&r.revocation_id);
    }
    w.u8(r.kind.as_byte()).digest(&r.target_id).digest(&r.issuer_key_id);
    if v.signature {
        w.bytes(&r.issuer_signature);
    }
    w.u32(r.created_at);
}

fn encode_var(r: &VaRecord, w: &mut Writer, v: View) {
    if v.id {
        w.digest(&r.var_id);
    }
    w.digest(&r.target_key_id).u8(r.kind.as_byte()).u64(r.created_at_block).u8(r.status.as_byte());
}

impl Record {
    pub fn tag(&self) -> Tag {
        match self {
            Record::PublicKey(_) => Tag::PublicKey,
            Record::Challenge(_) => Tag::Challenge,
            Record::Response(_) => Tag::Response,
            Record::VaResult(_) => Tag::VaResult,
            Record::Signature(_) => Tag::Signature,
            Record::Revocation(_) => Tag::Revocation,
            Record::Var(_) => Tag::Var,
        }
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            Record::PublicKey(_) => "PublicKeyRecord",
            Record::Challenge(_) => "ChallengeRecord",
            Record::Response(_) => "ResponseRecord",
            Record::VaResult(_) => "VAResultRecord",
            Record::Signature(_) => "SignatureRecord",
            Record::Revocation(_) => "RevocationRecord",
            Record::Var(_) => "VARecord",
        }
    }

    fn encode(&self, w: &mut Writer, v: View) {
        w.u8(self.tag().as_byte());
        match self {
            Record::PublicKey(r) => encode_key(r, w, v),
            Record::Challenge(r) => encode_challenge(r, w, v),
            Record::Response(r) => encode_response(r, w, v),
            Record::VaResult(r) => encode_result(r, w, v),
            Record::Signature(r) => encode_signature(r, w, v),
            Record::Revocation(r) => encode_revocation(r, w, v),
            Record::Var(r) => encode_var(r, w, v),
        }
    }

    /// Canonical bytes without checking invariants.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.encode(&mut w, View::FULL);
        w.into_bytes()
    }

    /// Chain-level identity: hash of the serialization without the record's
    /// own id field. Distinguishes the two parties' copies of a record.
    pub fn record_id(&self) -> Digest {
        let mut w = Writer::new();
        self.encode(&mut w, View::RECORD);
        hash(&w.into_bytes())
    }

    /// The stored logical id (`key_id`, `challenge_id`, ...).
    pub fn id(&self) -> Digest {
        match self {
            Record::PublicKey(r) => r.key_id,
            Record::Challenge(r) => r.challenge_id,
            Record::Response(r) => r.response_id,
            Record::VaResult(r) => r.result_id,
            Record::Signature(r) => r.signature_id,
            Record::Revocation(r) => r.revocation_id,
            Record::Var(r) => r.var_id,
        }
    }

    fn computed_id(&self) -> Digest {
        match self {
            Record::PublicKey(r) => r.computed_id(),
            Record::Challenge(r) => r.computed_id(),
            Record::Response(r) => r.computed_id(),
            Record::VaResult(r) => r.computed_id(),
            Record::Signature(r) => r.computed_id(),
            Record::Revocation(r) => r.computed_id(),
            Record::Var(r) => r.computed_id(),
        }
    }

    pub fn posted_by(&self) -> Option<Digest> {
        match self {
            Record::Challenge(r) => Some(r.posted_by),
            Record::Response(r) => Some(r.posted_by),
            _ => None,
        }
    }

    /// Logical day the record was created, where it has one.
    pub fn created_at(&self) -> Option<Day> {
        match self {
            Record::PublicKey(r) => Some(r.created_at),
            Record::Challenge(r) => Some(r.created_at),
            Record::Response(r) => Some(r.created_at),
            Record::VaResult(r) => Some(r.created_at),
            Record::Signature(r) => Some(r.created_at),
            Record::Revocation(r) => Some(r.created_at),
            Record::Var(_) => None,
        }
    }

    /// Keys the record names as owner, challenger, target, responder,
    /// verifier, signer, signee or issuer.
    pub fn involved_keys(&self) -> Vec<Digest> {
        let mut keys = match self {
            Record::PublicKey(r) => vec![r.key_id],
            Record::Challenge(r) => vec![r.challenger_key_id, r.target_key_id],
            Record::Response(r) => vec![r.responder_key_id],
            Record::VaResult(r) => vec![r.verifier_key_id, r.target_key_id],
            Record::Signature(r) => vec![r.signer_key_id, r.signee_key_id],
            Record::Revocation(r) => match r.kind {
                RevocationKind::Key => vec![r.target_id, r.issuer_key_id],
                RevocationKind::Signature => vec![r.issuer_key_id],
            },
            Record::Var(r) => vec![r.target_key_id],
        };
        keys.sort();
        keys.dedup();
        keys
    }

    /// Checks the invariants that need no chain context.
    pub fn check_invariants(&self) -> Result<(), RecordError> {
        let name = self.type_name();
        match self {
            Record::PublicKey(r) => {
                r.owner.check()?;
                if r.public_bytes.is_empty() || r.key_length_bits == 0 {
                    return Err(violation(name, "empty key material"));
                }
                check_lifespan(name, r.created_at, r.expires_at)?;
            }
            Record::Challenge(r) => {
                if r.challenger_key_id == r.target_key_id {
                    return Err(violation(name, "challenger and target are the same key"));
                }
                if r.posted_by != r.challenger_key_id && r.posted_by != r.target_key_id {
                    return Err(violation(name, "posted by a key outside the session"));
                }
            }
            Record::Response(_) => {}
            Record::VaResult(r) => {
                if (r.outcome == Outcome::Failure) != r.failure_reason.is_some() {
                    return Err(violation(name, "failure_reason must be present iff outcome is failure"));
                }
                if r.verifier_key_id == r.target_key_id {
                    return Err(violation(name, "verifier and target are the same key"));
                }
            }
            Record::Signature(r) => {
                if r.signer_key_id == r.signee_key_id {
                    return Err(violation(name, "self-signature"));
                }
                check_lifespan(name, r.created_at, r.expires_at)?;
            }
            Record::Revocation(_) => {}
            Record::Var(r) => {
                if r.status != VarStatus::Open {
                    return Err(violation(name, "VARs are generated open"));
                }
            }
        }
        if self.id() != self.computed_id() {
            return Err(violation(name, "stored id does not match content"));
        }
        Ok(())
    }
}

fn check_lifespan(name: &'static str, created: Day, expires: Day) -> Result<(), RecordError> {
    if expires <= created {
        return Err(violation(name, "expires_at must be after created_at"));
    }
    if expires - created > MAX_LIFESPAN_DAYS {
        return Err(violation(name, format!("lifespan {} exceeds {MAX_LIFESPAN_DAYS} days", expires - created)));
    }
    Ok(())
}

/// Serializes a record after checking its invariants.
pub fn canonical_serialize(record: &Record) -> Result<Vec<u8>, RecordError> {
    record.check_invariants()?;
    Ok(record.to_bytes())
}

/// Chain-level record id; fails if the record breaks its invariants.
pub fn record_id(record: &Record) -> Result<Digest, RecordError> {
    record.check_invariants()?;
    Ok(record.record_id())
}

pub fn deserialize(bytes: &[u8]) -> Result<Record, CodecError> {
    let mut r = Reader::new(bytes);
    let rec = read_record(&mut r)?;
    r.finish()?;
    Ok(rec)
}

fn read_failure_reason(r: &mut Reader<'_>) -> Result<Option<FailureReason>, CodecError> {
    Ok(if r.presence()? { Some(FailureReason::from_byte(r.u8()?)?) } else { None })
}

/// Reads one record from `r`, leaving the reader after it.
pub fn read_record(r: &mut Reader<'_>) -> Result<Record, CodecError> {
    let rec = match Tag::from_byte(r.u8()?)? {
        Tag::PublicKey => Record::PublicKey(PublicKeyRecord {
            key_id: r.digest()?,
            owner: EntityDescriptor {
                display_name: r.str()?,
                identifier: r.str()?,
                identifier_kind: IdentifierKind::from_byte(r.u8()?)?,
            },
            scheme: {
                let b = r.u8()?;
                SchemeId::from_byte(b).ok_or(CodecError::InvalidTag { what: "SchemeId", tag: b })?
            },
            public_bytes: r.bytes()?,
            key_length_bits: r.u32()?,
            created_at: r.u32()?,
            expires_at: r.u32()?,
        }),
        Tag::Challenge => Record::Challenge(ChallengeRecord {
            challenge_id: r.digest()?,
            session_id: r.digest()?,
            var_ref: r.opt_digest()?,
            kind: VaKind::from_byte(r.u8()?)?,
            visibility: Visibility::from_byte(r.u8()?)?,
            challenger_key_id: r.digest()?,
            target_key_id: r.digest()?,
            payload: r.bytes()?,
            answer_commitment: r.digest()?,
            created_at: r.u32()?,
            posted_by: r.digest()?,
        }),
        Tag::Response => Record::Response(ResponseRecord {
            response_id: r.digest()?,
            challenge_id: r.digest()?,
            responder_key_id: r.digest()?,
            payload: r.bytes()?,
            responder_signature: r.bytes()?,
            created_at: r.u32()?,
            posted_by: r.digest()?,
        }),
        Tag::VaResult => Record::VaResult(VaResultRecord {
            result_id: r.digest()?,
            session_id: r.digest()?,
            challenge_id: r.digest()?,
            verifier_key_id: r.digest()?,
            target_key_id: r.digest()?,
            outcome: Outcome::from_byte(r.u8()?)?,
            failure_reason: read_failure_reason(r)?,
            created_at: r.u32()?,
            verifier_signature: r.bytes()?,
        }),
        Tag::Signature => Record::Signature(SignatureRecord {
            signature_id: r.digest()?,
            signer_key_id: r.digest()?,
            signee_key_id: r.digest()?,
            kind: VaKind::from_byte(r.u8()?)?,
            result_ref: r.digest()?,
            created_at: r.u32()?,
            expires_at: r.u32()?,
            signer_signature: r.bytes()?,
        }),
        Tag::Revocation => Record::Revocation(RevocationRecord {
            revocation_id: r.digest()?,
            kind: RevocationKind::from_byte(r.u8()?)?,
            target_id: r.digest()?,
            issuer_key_id: r.digest()?,
            issuer_signature: r.bytes()?,
            created_at: r.u32()?,
        }),
        Tag::Var => Record::Var(VaRecord {
            var_id: r.digest()?,
            target_key_id: r.digest()?,
            kind: VarKind::from_byte(r.u8()?)?,
            created_at_block: r.u64()?,
            status: VarStatus::from_byte(r.u8()?)?,
        }),
    };
    Ok(rec)
}

macro_rules! impl_from_record {
    ($($ty:ident => $variant:ident),+ $(,)?) => {
        $(impl From<$ty> for Record {
            fn from(r: $ty) -> Self {
                Record::$variant(r)
            }
        })+
    };
}

impl_from_record!(
    PublicKeyRecord => PublicKey,
    ChallengeRecord => Challenge,
    ResponseRecord => Response,
    VaResultRecord => VaResult,
    SignatureRecord => Signature,
    RevocationRecord => Revocation,
    VaRecord => Var,
);

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::generate_keypair;
    use proptest::prelude::*;

    fn golden_key() -> PublicKeyRecord {
        let key = KeyMaterial::public_only(SchemeId::ToyDeterministic, 64, vec![1, 2, 3, 4, 5, 6, 7, 8]);
        PublicKeyRecord::new(EntityDescriptor::email("Alice", "alice@example.org"), &key, 10, 375).unwrap()
    }

    #[test]
    fn golden_key_record() {
        let rec = Record::from(golden_key());
        let bytes = rec.to_bytes();
        let expected_body = [
            &[1u8][..],
            golden_key().key_id.as_bytes(),
            &[0, 0, 0, 5],
            b"Alice",
            &[0, 0, 0, 17],
            b"alice@example.org",
            &[0, 0],
            &[0, 0, 0, 8, 1, 2, 3, 4, 5, 6, 7, 8],
            &[0, 0, 0, 64],
            &[0, 0, 0, 10],
            &[0, 0, 1, 119],
        ]
        .concat();
        assert_eq!(bytes, expected_body);
        // SHA-256 of the id-less body, computed outside this crate with
        // Python's hashlib over the same byte layout.
        assert_eq!(golden_key().key_id.to_hex(), "ea72944669939ed16d72e011ace9dbc07779d8d48fe070ee7047309cc99e4f41");
    }

    #[test]
    fn key_id_covers_display_name() {
        let a = golden_key();
        let key = KeyMaterial::public_only(SchemeId::ToyDeterministic, 64, vec![1, 2, 3, 4, 5, 6, 7, 8]);
        let b = PublicKeyRecord::new(EntityDescriptor::email("Alicia", "alice@example.org"), &key, 10, 375).unwrap();
        assert_ne!(a.key_id, b.key_id);
        assert_ne!(Record::from(a).to_bytes(), Record::from(b).to_bytes());
    }

    #[test]
    fn lifespan_limits() {
        let key = generate_keypair(SchemeId::ToyDeterministic, 1, 1024).unwrap();
        let owner = EntityDescriptor::email("A", "a@b.c");
        assert!(PublicKeyRecord::new(owner.clone(), &key, 0, 365).is_ok());
        assert!(PublicKeyRecord::new(owner.clone(), &key, 0, 366).is_err());
        assert!(PublicKeyRecord::new(owner.clone(), &key, 5, 5).is_err());
        assert!(PublicKeyRecord::new(EntityDescriptor::email("A", "a@@b"), &key, 0, 10).is_err());
        assert!(PublicKeyRecord::new(EntityDescriptor::domain("A", ""), &key, 0, 10).is_err());
        assert!(PublicKeyRecord::new(EntityDescriptor::domain("Shop", "shop.example"), &key, 0, 10).is_ok());
    }

    #[test]
    fn result_reason_iff_failure() {
        let mut r = VaResultRecord {
            result_id: Digest::ZERO,
            session_id: hash(b"s"),
            challenge_id: hash(b"c"),
            verifier_key_id: hash(b"v"),
            target_key_id: hash(b"t"),
            outcome: Outcome::Success,
            failure_reason: Some(FailureReason::Timeout),
            created_at: 0,
            verifier_signature: vec![],
        };
        r.result_id = r.computed_id();
        assert!(Record::from(r.clone()).check_invariants().is_err());
        r.failure_reason = None;
        r.result_id = r.computed_id();
        assert!(Record::from(r).check_invariants().is_ok());
    }

    #[test]
    fn posted_copies_share_logical_id_only() {
        let mut c = ChallengeRecord {
            challenge_id: Digest::ZERO,
            session_id: hash(b"s"),
            var_ref: None,
            kind: VaKind::Validation,
            visibility: Visibility::Open,
            challenger_key_id: hash(b"a"),
            target_key_id: hash(b"b"),
            payload: vec![9; 10],
            answer_commitment: hash(b"x"),
            created_at: 3,
            posted_by: hash(b"a"),
        };
        c.challenge_id = c.computed_id();
        let other = c.posted_by(hash(b"b"));
        assert_eq!(other.computed_id(), c.challenge_id);
        assert_ne!(Record::from(c.clone()).record_id(), Record::from(other.clone()).record_id());
        assert!(Record::from(other).check_invariants().is_ok());
        assert!(Record::from(c.posted_by(hash(b"z"))).check_invariants().is_err());
    }

    #[test]
    fn stale_id_is_rejected() {
        let mut k = golden_key();
        k.owner.display_name.push('!');
        let rec = Record::from(k);
        assert!(matches!(canonical_serialize(&rec), Err(RecordError::InvariantViolation { .. })));
        assert!(record_id(&rec).is_err());
    }

    fn arb_digest() -> impl Strategy<Value = Digest> {
        any::<[u8; 32]>().prop_map(Digest::from_bytes)
    }

    fn arb_record() -> impl Strategy<Value = Record> {
        prop_oneof![
            (
                ".{0,12}",
                "[a-z]{1,8}@[a-z]{1,8}",
                prop::collection::vec(any::<u8>(), 1..64),
                1u32..4096,
                0u32..1000,
                1u32..=365
            )
                .prop_map(|(name, email, pubk, bits, created, span)| {
                    let key = KeyMaterial::public_only(SchemeId::ToyDeterministic, bits, pubk);
                    Record::from(
                        PublicKeyRecord::new(EntityDescriptor::email(&name, &email), &key, created, created + span)
                            .unwrap(),
                    )
                }),
            (
                arb_digest(),
                proptest::option::of(arb_digest()),
                arb_digest(),
                arb_digest(),
                prop::collection::vec(any::<u8>(), 0..64),
                any::<u32>(),
                any::<bool>()
            )
                .prop_map(|(session_id, var_ref, a, b, payload, day, by_target)| {
                    let mut c = ChallengeRecord {
                        challenge_id: Digest::ZERO,
                        session_id,
                        var_ref,
                        kind: VaKind::Authentication,
                        visibility: Visibility::Opaque,
                        challenger_key_id: a,
                        target_key_id: b,
                        payload,
                        answer_commitment: hash(b"c"),
                        created_at: day,
                        posted_by: if by_target { b } else { a },
                    };
                    c.challenge_id = c.computed_id();
                    Record::from(c)
                }),
            (arb_digest(), arb_digest(), any::<u64>(), 0u8..3).prop_map(|(t, _, h, k)| {
                let mut v = VaRecord {
                    var_id: Digest::ZERO,
                    target_key_id: t,
                    kind: VarKind::from_byte(k).unwrap(),
                    created_at_block: h,
                    status: VarStatus::Open,
                };
                v.var_id = v.computed_id();
                Record::from(v)
            }),
            (arb_digest(), arb_digest(), prop::collection::vec(any::<u8>(), 0..40), any::<u32>(), 0u8..4).prop_map(
                |(a, b, sig, day, reason)| {
                    let mut r = VaResultRecord {
                        result_id: Digest::ZERO,
                        session_id: a,
                        challenge_id: b,
                        verifier_key_id: a,
                        target_key_id: b,
                        outcome: Outcome::Failure,
                        failure_reason: Some(FailureReason::from_byte(reason).unwrap()),
                        created_at: day,
                        verifier_signature: sig,
                    };
                    r.result_id = r.computed_id();
                    Record::from(r)
                }
            ),
        ]
    }

    proptest! {
        #[test]
        fn round_trip(rec in arb_record()) {
            let bytes = canonical_serialize(&rec).unwrap();
            prop_assert_eq!(deserialize(&bytes).unwrap(), rec.clone());
            prop_assert_eq!(canonical_serialize(&rec).unwrap(), bytes);
        }

        #[test]
        fn single_byte_changes_alter_record_or_fail(rec in arb_record(), pos in any::<prop::sample::Index>(), flip in 1u8..=255) {
            let mut bytes = rec.to_bytes();
            let i = pos.index(bytes.len());
            bytes[i] ^= flip;
            if let Ok(other) = deserialize(&bytes) {
                prop_assert_ne!(other.to_bytes(), rec.to_bytes());
            }
        }
    }
}
