//! Bidirectional challenge-response validation and authentication sessions.
//!
//! A session runs two directions in strict order. In the forward direction
//! the initiator challenges the responder; in the backward direction the
//! roles swap. Each direction produces a challenge, usually a response, and
//! a result signed by that direction's verifier. Successful open directions
//! also yield a [`SignatureRecord`].
//!
//! Challenge plaintext is `nonce (32) ‖ payload_template`, encrypted under
//! the target's public key. A correct response carries that plaintext back,
//! signed by the target. The challenge commits to the expected answer with
//! `hash("authcoin/answer" ‖ plaintext)` so anyone can check an open
//! response against it.

use std::collections::{BTreeMap, BTreeSet};

use rand::RngCore;

use crate::chain::Chain;
use crate::crypto::{self, hash_parts, CryptoError, Digest, KeyMaterial};
use crate::keylife::{formal_validate, FormalChecks};
use crate::records::{
    ChallengeRecord, Day, FailureReason, Outcome, PublicKeyRecord, Record, ResponseRecord, SignatureRecord, VaKind,
    VaResultRecord, Visibility, MAX_LIFESPAN_DAYS,
};

pub const DEFAULT_DEADLINE_DAYS: Day = 14;
pub const DEFAULT_TEMPLATE: &[u8] = b"this is a challenge";
const NONCE_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProtocolError {
    #[error("key {key_id} failed formal validation: {}", .checks.failing().join(", "))]
    FormalValidationFailed { key_id: Digest, checks: FormalChecks },
    #[error("a key cannot verify itself")]
    SelfVerification,
    #[error("authentication is impossible without a side channel or local knowledge")]
    UnsupportedCombination,
    #[error("session is {state:?}; operation needs {needed}")]
    WrongState { state: SessionState, needed: &'static str },
    #[error("no response yet and the deadline (day {deadline}) has not passed")]
    DeadlineNotReached { deadline: Day },
    #[error("key does not belong to the expected party")]
    WrongKey,
    #[error("challenge is not part of this session")]
    ForeignChallenge,
    #[error(transparent)]
    Crypto(#[from] CryptoError),
}

/// Where the verifying party gets the information a challenge relies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Locality {
    LocalWithInfo,
    GlobalWithInfo,
    GlobalNoInfo,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChallengeSpec {
    pub kind: VaKind,
    pub visibility: Visibility,
    pub locality: Locality,
    pub payload_template: Vec<u8>,
    pub deadline_days: Day,
    /// Requested signature lifetime; capped by both keys' expiry.
    pub signature_lifespan_days: Day,
}

impl ChallengeSpec {
    pub fn new(kind: VaKind, visibility: Visibility) -> Self {
        Self {
            kind,
            visibility,
            locality: Locality::LocalWithInfo,
            payload_template: DEFAULT_TEMPLATE.to_vec(),
            deadline_days: DEFAULT_DEADLINE_DAYS,
            signature_lifespan_days: MAX_LIFESPAN_DAYS,
        }
    }

    pub fn validation() -> Self {
        Self::new(VaKind::Validation, Visibility::Open)
    }

    pub fn authentication() -> Self {
        Self::new(VaKind::Authentication, Visibility::Open)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SessionState {
    Created,
    ForwardChallenged,
    ForwardDone,
    BackwardChallenged,
    Complete,
    Failed,
}

/// Forward: initiator verifies responder. Backward: the reverse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Party {
    Initiator,
    Responder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FulfilOutcome {
    Correct,
    Wrong,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verdict {
    Accept,
    Reject,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DirectionRecords {
    pub challenge: Option<ChallengeRecord>,
    pub response: Option<ResponseRecord>,
    pub result: Option<VaResultRecord>,
    pub signature: Option<SignatureRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VaSession {
    pub session_id: Digest,
    pub initiator: PublicKeyRecord,
    pub responder: PublicKeyRecord,
    pub spec: ChallengeSpec,
    pub var_ref: Option<Digest>,
    pub state: SessionState,
    pub forward: DirectionRecords,
    pub backward: DirectionRecords,
    /// Shared by the two parties only; never posted.
    pub opaque_secret: Option<[u8; 32]>,
}

/// Result of evaluating one direction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Evaluation {
    pub result: VaResultRecord,
    pub signature: Option<SignatureRecord>,
}

impl VaSession {
    pub fn direction(&self, d: Direction) -> &DirectionRecords {
        match d {
            Direction::Forward => &self.forward,
            Direction::Backward => &self.backward,
        }
    }

    fn direction_mut(&mut self, d: Direction) -> &mut DirectionRecords {
        match d {
            Direction::Forward => &mut self.forward,
            Direction::Backward => &mut self.backward,
        }
    }

    /// (verifier, target) of a direction.
    pub fn roles(&self, d: Direction) -> (&PublicKeyRecord, &PublicKeyRecord) {
        match d {
            Direction::Forward => (&self.initiator, &self.responder),
            Direction::Backward => (&self.responder, &self.initiator),
        }
    }

    pub fn party_key(&self, party: Party) -> &PublicKeyRecord {
        match party {
            Party::Initiator => &self.initiator,
            Party::Responder => &self.responder,
        }
    }

    /// The direction currently awaiting a response or evaluation.
    pub fn open_direction(&self) -> Option<Direction> {
        match self.state {
            SessionState::ForwardChallenged => Some(Direction::Forward),
            SessionState::BackwardChallenged => Some(Direction::Backward),
            _ => None,
        }
    }

    /// Last day on which a response to the open challenge is accepted.
    pub fn deadline(&self) -> Option<Day> {
        let d = self.open_direction()?;
        let c = self.direction(d).challenge.as_ref()?;
        Some(c.created_at + self.spec.deadline_days)
    }

    fn direction_of(&self, challenge_id: &Digest) -> Option<Direction> {
        [Direction::Forward, Direction::Backward]
            .into_iter()
            .find(|d| self.direction(*d).challenge.as_ref().is_some_and(|c| &c.challenge_id == challenge_id))
    }

    pub fn is_finished(&self) -> bool {
        matches!(self.state, SessionState::Complete | SessionState::Failed)
    }
}

fn same_key(k: &KeyMaterial, rec: &PublicKeyRecord) -> bool {
    k.scheme == rec.scheme && k.public_bytes == rec.public_bytes
}

fn answer_commitment(plaintext: &[u8]) -> Digest {
    hash_parts(&[b"authcoin/answer", plaintext])
}

/// Opens a session after both keys pass formal validation.
#[allow(clippy::too_many_arguments)]
pub fn start_session(
    chain: &Chain,
    initiator_key_id: &Digest,
    responder_key_id: &Digest,
    spec: ChallengeSpec,
    now: Day,
    min_bits: u32,
    rng: &mut dyn RngCore,
) -> Result<VaSession, ProtocolError> {
    if initiator_key_id == responder_key_id {
        return Err(ProtocolError::SelfVerification);
    }
    if spec.kind == VaKind::Authentication && spec.locality == Locality::GlobalNoInfo {
        return Err(ProtocolError::UnsupportedCombination);
    }
    for id in [initiator_key_id, responder_key_id] {
        let fv = formal_validate(chain, id, now, min_bits);
        if !fv.passed {
            return Err(ProtocolError::FormalValidationFailed { key_id: *id, checks: fv.checks });
        }
    }
    let initiator = chain.key_record(initiator_key_id).expect("validated").1.clone();
    let responder = chain.key_record(responder_key_id).expect("validated").1.clone();

    let mut salt = [0u8; 32];
    rng.fill_bytes(&mut salt);
    let session_id = hash_parts(&[
        b"authcoin/session",
        initiator.key_id.as_bytes(),
        responder.key_id.as_bytes(),
        &now.to_be_bytes(),
        &[spec.kind.as_byte(), spec.visibility.as_byte()],
        &salt,
    ]);
    let opaque_secret = (spec.visibility == Visibility::Opaque).then(|| {
        let mut s = [0u8; 32];
        rng.fill_bytes(&mut s);
        s
    });
    Ok(VaSession {
        session_id,
        initiator,
        responder,
        spec,
        var_ref: None,
        state: SessionState::Created,
        forward: DirectionRecords::default(),
        backward: DirectionRecords::default(),
        opaque_secret,
    })
}

/// Issues the next challenge: forward from a fresh session, backward once
/// the forward direction succeeded.
pub fn issue_challenge(
    session: &mut VaSession,
    direction: Direction,
    now: Day,
    rng: &mut dyn RngCore,
) -> Result<ChallengeRecord, ProtocolError> {
    let (needed, next) = match direction {
        Direction::Forward => (SessionState::Created, SessionState::ForwardChallenged),
        Direction::Backward => (SessionState::ForwardDone, SessionState::BackwardChallenged),
    };
    if session.state != needed {
        return Err(ProtocolError::WrongState {
            state: session.state,
            needed: match direction {
                Direction::Forward => "a fresh session",
                Direction::Backward => "a completed forward direction",
            },
        });
    }
    let (verifier, target) = session.roles(direction);
    let (verifier_id, target_id) = (verifier.key_id, target.key_id);

    let mut plaintext = vec![0u8; NONCE_LEN];
    rng.fill_bytes(&mut plaintext);
    plaintext.extend_from_slice(&session.spec.payload_template);
    let mut payload = crypto::encrypt(&target.key_material(), &plaintext, rng)?;
    if let Some(secret) = &session.opaque_secret {
        payload = crypto::seal_symmetric(secret, &payload, rng);
    }

    let mut c = ChallengeRecord {
        challenge_id: Digest::ZERO,
        session_id: session.session_id,
        var_ref: session.var_ref,
        kind: session.spec.kind,
        visibility: session.spec.visibility,
        challenger_key_id: verifier_id,
        target_key_id: target_id,
        payload,
        answer_commitment: answer_commitment(&plaintext),
        created_at: now,
        posted_by: verifier_id,
    };
    c.challenge_id = c.computed_id();
    *session.direction_mut(direction) = DirectionRecords { challenge: Some(c.clone()), ..Default::default() };
    session.state = next;
    Ok(c)
}

/// The target's side of a challenge.
///
/// `Correct` needs the target's private key: an actor holding any other key
/// gets [`CryptoError::DecryptionFailure`]. `Wrong` produces a well-formed,
/// signed answer that does not match. `None` models silence.
pub fn fulfil_challenge(
    session: &mut VaSession,
    actor: &KeyMaterial,
    challenge: &ChallengeRecord,
    outcome: FulfilOutcome,
    now: Day,
    rng: &mut dyn RngCore,
) -> Result<Option<ResponseRecord>, ProtocolError> {
    let direction = session.direction_of(&challenge.challenge_id).ok_or(ProtocolError::ForeignChallenge)?;
    let answer = match outcome {
        FulfilOutcome::None => return Ok(None),
        FulfilOutcome::Correct => {
            let inner = match &session.opaque_secret {
                Some(secret) => crypto::open_symmetric(secret, &challenge.payload)?,
                None => challenge.payload.clone(),
            };
            crypto::decrypt(actor, &inner)?
        }
        FulfilOutcome::Wrong => {
            let mut guess = vec![0u8; NONCE_LEN];
            rng.fill_bytes(&mut guess);
            guess.extend_from_slice(&session.spec.payload_template);
            guess
        }
    };
    let payload = match &session.opaque_secret {
        Some(secret) => crypto::seal_symmetric(secret, &answer, rng),
        None => answer,
    };
    let signature = crypto::sign(actor, &ResponseRecord::signing_message(&challenge.challenge_id, &payload))?;
    let mut r = ResponseRecord {
        response_id: Digest::ZERO,
        challenge_id: challenge.challenge_id,
        responder_key_id: challenge.target_key_id,
        payload,
        responder_signature: signature,
        created_at: now,
        posted_by: challenge.target_key_id,
    };
    r.response_id = r.computed_id();
    session.direction_mut(direction).response = Some(r.clone());
    Ok(Some(r))
}

/// Recovers the answer bytes a response carries, if it can be read.
fn response_answer(session: &VaSession, response: &ResponseRecord) -> Option<Vec<u8>> {
    match &session.opaque_secret {
        Some(secret) => crypto::open_symmetric(secret, &response.payload).ok(),
        None => Some(response.payload.clone()),
    }
}

/// The verifier judges the open direction and documents the outcome.
///
/// Success needs a response that is present, validly signed by the target,
/// on time, matching the committed answer, and accepted by `verdict`.
pub fn evaluate(
    session: &mut VaSession,
    verifier: &KeyMaterial,
    verdict: Verdict,
    now: Day,
) -> Result<Evaluation, ProtocolError> {
    let direction = session
        .open_direction()
        .ok_or(ProtocolError::WrongState { state: session.state, needed: "an issued challenge" })?;
    let deadline = session.deadline().expect("open direction has a challenge");
    let (_, target) = session.roles(direction);
    let records = session.direction(direction);
    let challenge = records.challenge.as_ref().expect("open direction has a challenge");

    let failure = match &records.response {
        None if now <= deadline => return Err(ProtocolError::DeadlineNotReached { deadline }),
        None => Some(FailureReason::NoResponse),
        Some(r) => {
            let msg = ResponseRecord::signing_message(&r.challenge_id, &r.payload);
            if r.challenge_id != challenge.challenge_id
                || !crypto::verify(&target.key_material(), &msg, &r.responder_signature)
            {
                Some(FailureReason::BadSignature)
            } else if r.created_at > deadline {
                Some(FailureReason::Timeout)
            } else if response_answer(session, r).map(|a| answer_commitment(&a)) != Some(challenge.answer_commitment)
                || verdict == Verdict::Reject
            {
                Some(FailureReason::Unsatisfactory)
            } else {
                None
            }
        }
    };
    assert_outcome(session, verifier, failure, now)
}

/// Documents an outcome for the open direction without judging evidence.
///
/// [`evaluate`] is the honest path; this is what a careless or dishonest
/// verifier can still post, and what mismatch detection must catch.
pub fn assert_outcome(
    session: &mut VaSession,
    verifier: &KeyMaterial,
    failure: Option<FailureReason>,
    now: Day,
) -> Result<Evaluation, ProtocolError> {
    let direction = session
        .open_direction()
        .ok_or(ProtocolError::WrongState { state: session.state, needed: "an issued challenge" })?;
    let (verifier_rec, target_rec) = session.roles(direction);
    if !same_key(verifier, verifier_rec) {
        return Err(ProtocolError::WrongKey);
    }
    let challenge = session.direction(direction).challenge.as_ref().expect("open direction has a challenge");

    let mut result = VaResultRecord {
        result_id: Digest::ZERO,
        session_id: session.session_id,
        challenge_id: challenge.challenge_id,
        verifier_key_id: verifier_rec.key_id,
        target_key_id: target_rec.key_id,
        outcome: if failure.is_some() { Outcome::Failure } else { Outcome::Success },
        failure_reason: failure,
        created_at: now,
        verifier_signature: Vec::new(),
    };
    result.verifier_signature = crypto::sign(verifier, &result.signing_message())?;
    result.result_id = result.computed_id();

    let signature = if failure.is_none() && session.spec.visibility == Visibility::Open {
        let expires_at = (now + session.spec.signature_lifespan_days.min(MAX_LIFESPAN_DAYS))
            .min(verifier_rec.expires_at)
            .min(target_rec.expires_at);
        let mut s = SignatureRecord {
            signature_id: Digest::ZERO,
            signer_key_id: verifier_rec.key_id,
            signee_key_id: target_rec.key_id,
            kind: session.spec.kind,
            result_ref: result.result_id,
            created_at: now,
            expires_at,
            signer_signature: Vec::new(),
        };
        s.signer_signature = crypto::sign(verifier, &s.signing_message())?;
        s.signature_id = s.computed_id();
        Some(s)
    } else {
        None
    };

    session.state = match (direction, failure) {
        (_, Some(_)) => SessionState::Failed,
        (Direction::Forward, None) => SessionState::ForwardDone,
        (Direction::Backward, None) => SessionState::Complete,
    };
    let records = session.direction_mut(direction);
    records.result = Some(result.clone());
    records.signature = signature.clone();
    Ok(Evaluation { result, signature })
}

/// The records `party` posts for the session: its own copy of every
/// challenge and validly signed response, plus the results and signatures
/// of the directions it verified.
pub fn post_session_records(session: &VaSession, party: Party) -> Vec<Record> {
    let me = session.party_key(party).key_id;
    let mut out = Vec::new();
    for d in [Direction::Forward, Direction::Backward] {
        let (verifier, target) = session.roles(d);
        let records = session.direction(d);
        let Some(challenge) = &records.challenge else { continue };
        out.push(Record::Challenge(challenge.posted_by(me)));
        if let Some(r) = &records.response {
            let msg = ResponseRecord::signing_message(&r.challenge_id, &r.payload);
            if crypto::verify(&target.key_material(), &msg, &r.responder_signature) {
                out.push(Record::Response(r.posted_by(me)));
            }
        }
        if verifier.key_id == me {
            if let Some(res) = &records.result {
                out.push(res.clone().into());
            }
            if let Some(sig) = &records.signature {
                out.push(sig.clone().into());
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DivergenceKind {
    /// The two parties posted different challenges for the same direction.
    ConflictingChallenges,
    /// Different responses were posted to one challenge.
    ConflictingResponses,
    /// A failure was documented although a valid, matching, timely response
    /// is on chain.
    UnjustifiedFailure,
    /// A success was documented without a valid, matching response on chain.
    UnjustifiedSuccess,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct MissingSide {
    pub record_id: Digest,
    pub record_type: &'static str,
    pub missing_party: Digest,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Divergence {
    pub record_id: Digest,
    pub kind: DivergenceKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MismatchReport {
    pub session_id: Digest,
    pub consistent: bool,
    pub missing_sides: Vec<MissingSide>,
    pub divergent_records: Vec<Divergence>,
}

type Copies<'a> = (&'a ChallengeRecord, BTreeSet<Digest>);

/// Cross-checks the independently posted copies of a session's records.
pub fn detect_posting_mismatch(chain: &Chain, session_id: &Digest) -> MismatchReport {
    // (challenger, target) -> challenge id -> (challenge, posters)
    let mut challenges: BTreeMap<(Digest, Digest), BTreeMap<Digest, Copies<'_>>> = BTreeMap::new();
    let mut results = Vec::new();
    for (_, r) in chain.session_records(session_id) {
        match r {
            Record::Challenge(c) => {
                challenges
                    .entry((c.challenger_key_id, c.target_key_id))
                    .or_default()
                    .entry(c.challenge_id)
                    .or_insert_with(|| (c, BTreeSet::new()))
                    .1
                    .insert(c.posted_by);
            }
            Record::VaResult(v) => results.push(v),
            _ => {}
        }
    }

    let mut missing = Vec::new();
    let mut divergent = Vec::new();
    for ((challenger, target), copies) in &challenges {
        if copies.len() > 1 {
            divergent.extend(
                copies.keys().map(|id| Divergence { record_id: *id, kind: DivergenceKind::ConflictingChallenges }),
            );
        }
        for (id, (c, posters)) in copies {
            for party in [challenger, target] {
                if !posters.contains(party) {
                    missing.push(MissingSide { record_id: *id, record_type: "challenge", missing_party: *party });
                }
            }
            let mut responses: BTreeMap<Digest, BTreeSet<Digest>> = BTreeMap::new();
            for (_, r) in chain.responses_to(&c.challenge_id) {
                if let Record::Response(r) = r {
                    responses.entry(r.response_id).or_default().insert(r.posted_by);
                }
            }
            if responses.len() > 1 {
                divergent.extend(
                    responses
                        .keys()
                        .map(|id| Divergence { record_id: *id, kind: DivergenceKind::ConflictingResponses }),
                );
            }
            for (rid, posters) in &responses {
                for party in [challenger, target] {
                    if !posters.contains(party) {
                        missing.push(MissingSide { record_id: *rid, record_type: "response", missing_party: *party });
                    }
                }
            }
        }
    }

    for v in results {
        let Some((_, Record::Challenge(c))) = chain.records_by_id(&v.challenge_id).next() else { continue };
        if c.visibility == Visibility::Opaque {
            continue;
        }
        let before_result = |r: &ResponseRecord| r.created_at <= v.created_at;
        let matching = chain.responses_to(&c.challenge_id).any(|(_, r)| {
            matches!(r, Record::Response(r) if answer_commitment(&r.payload) == c.answer_commitment && before_result(r))
        });
        let unjustified = match v.failure_reason {
            None => !matching,
            Some(FailureReason::NoResponse | FailureReason::BadSignature) => matching,
            Some(FailureReason::Unsatisfactory) => matching && c.kind == VaKind::Validation,
            Some(FailureReason::Timeout) => false,
        };
        if unjustified {
            let kind =
                if v.is_success() { DivergenceKind::UnjustifiedSuccess } else { DivergenceKind::UnjustifiedFailure };
            divergent.push(Divergence { record_id: v.result_id, kind });
        }
    }

    missing.sort();
    missing.dedup();
    divergent.sort();
    divergent.dedup();
    MismatchReport {
        session_id: *session_id,
        consistent: missing.is_empty() && divergent.is_empty(),
        missing_sides: missing,
        divergent_records: divergent,
    }
}

#[cfg(test)]
mod tests;
