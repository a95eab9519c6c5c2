use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::keylife::{history, DEFAULT_MIN_BITS};
use crate::testutil::{actor, mine};

struct Fixture {
    chain: Chain,
    a: (KeyMaterial, PublicKeyRecord),
    b: (KeyMaterial, PublicKeyRecord),
    c: (KeyMaterial, PublicKeyRecord),
    rng: ChaCha8Rng,
}

fn fixture() -> Fixture {
    let a = actor("Alice", 1, 0);
    let b = actor("Bob", 2, 0);
    let c = actor("Carol", 3, 0);
    let chain = Chain::new(4, 0, vec![a.1.clone().into(), b.1.clone().into(), c.1.clone().into()]).unwrap();
    Fixture { chain, a, b, c, rng: ChaCha8Rng::seed_from_u64(42) }
}

impl Fixture {
    fn start(&mut self, spec: ChallengeSpec, now: Day) -> VaSession {
        start_session(&self.chain, &self.a.1.key_id, &self.b.1.key_id, spec, now, DEFAULT_MIN_BITS, &mut self.rng)
            .unwrap()
    }

    /// One direction with the given response behaviour and verdict.
    fn run_direction(&mut self, s: &mut VaSession, d: Direction, outcome: FulfilOutcome, now: Day) -> Evaluation {
        let (verifier, target) = match d {
            Direction::Forward => (self.a.0.clone(), self.b.0.clone()),
            Direction::Backward => (self.b.0.clone(), self.a.0.clone()),
        };
        let c = issue_challenge(s, d, now, &mut self.rng).unwrap();
        fulfil_challenge(s, &target, &c, outcome, now, &mut self.rng).unwrap();
        let at = if outcome == FulfilOutcome::None { now + s.spec.deadline_days + 1 } else { now };
        evaluate(s, &verifier, Verdict::Accept, at).unwrap()
    }

    fn run_full(&mut self, spec: ChallengeSpec, now: Day) -> VaSession {
        let mut s = self.start(spec, now);
        self.run_direction(&mut s, Direction::Forward, FulfilOutcome::Correct, now);
        self.run_direction(&mut s, Direction::Backward, FulfilOutcome::Correct, now);
        s
    }

    fn post_both(&mut self, s: &VaSession, day: Day) {
        let mut records = post_session_records(s, Party::Initiator);
        records.extend(post_session_records(s, Party::Responder));
        mine(&mut self.chain, records, day);
    }
}

#[test]
fn start_session_gates() {
    let mut f = fixture();
    let s = f.start(ChallengeSpec::validation(), 1);
    assert_eq!(s.state, SessionState::Created);
    assert!(s.opaque_secret.is_none());

    let a = f.a.1.key_id;
    let err = start_session(&f.chain, &a, &a, ChallengeSpec::validation(), 1, DEFAULT_MIN_BITS, &mut f.rng);
    assert_eq!(err.unwrap_err(), ProtocolError::SelfVerification);

    let mut spec = ChallengeSpec::authentication();
    spec.locality = Locality::GlobalNoInfo;
    let err = start_session(&f.chain, &a, &f.b.1.key_id, spec, 1, DEFAULT_MIN_BITS, &mut f.rng);
    assert_eq!(err.unwrap_err(), ProtocolError::UnsupportedCombination);

    let mut spec = ChallengeSpec::validation();
    spec.locality = Locality::GlobalNoInfo;
    assert!(start_session(&f.chain, &a, &f.b.1.key_id, spec, 1, DEFAULT_MIN_BITS, &mut f.rng).is_ok());

    let err =
        start_session(&f.chain, &a, &f.b.1.key_id, ChallengeSpec::validation(), 365, DEFAULT_MIN_BITS, &mut f.rng);
    match err.unwrap_err() {
        ProtocolError::FormalValidationFailed { checks, .. } => {
            assert!(!checks.not_expired);
            assert_eq!(checks.failing(), vec!["not_expired"]);
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn honest_open_validation_completes_and_posts() {
    let mut f = fixture();
    let s = f.run_full(ChallengeSpec::validation(), 1);
    assert_eq!(s.state, SessionState::Complete);
    let (fwd, bwd) = (s.forward.result.as_ref().unwrap(), s.backward.result.as_ref().unwrap());
    assert!(fwd.is_success() && bwd.is_success());
    assert_eq!((fwd.verifier_key_id, fwd.target_key_id), (bwd.target_key_id, bwd.verifier_key_id));
    assert_eq!(s.forward.signature.as_ref().unwrap().kind, VaKind::Validation);

    let init = post_session_records(&s, Party::Initiator);
    let resp = post_session_records(&s, Party::Responder);
    // 2 challenges, 2 responses, plus result and signature of the verified direction.
    assert_eq!(init.len(), 6);
    assert_eq!(resp.len(), 6);
    for (x, y) in init.iter().zip(&resp) {
        match (x, y) {
            (Record::Challenge(p), Record::Challenge(q)) => assert_eq!(p.payload, q.payload),
            (Record::Response(p), Record::Response(q)) => assert_eq!(p.payload, q.payload),
            _ => {}
        }
    }
    f.post_both(&s, 2);
    let report = detect_posting_mismatch(&f.chain, &s.session_id);
    assert!(report.consistent, "{report:?}");

    let h = history(&f.chain, &f.a.1.key_id);
    let count = |t: &str| h.iter().filter(|(_, r)| r.type_name() == t).count();
    assert_eq!(count("ChallengeRecord"), 2);
    assert_eq!(count("ResponseRecord"), 2);
    assert_eq!(count("VAResultRecord"), 2);
    assert_eq!(count("SignatureRecord"), 2);
}

#[test]
fn backward_before_forward_is_rejected() {
    let mut f = fixture();
    let mut s = f.start(ChallengeSpec::validation(), 1);
    let err = issue_challenge(&mut s, Direction::Backward, 1, &mut f.rng).unwrap_err();
    assert!(matches!(err, ProtocolError::WrongState { state: SessionState::Created, .. }));
    issue_challenge(&mut s, Direction::Forward, 1, &mut f.rng).unwrap();
    assert!(issue_challenge(&mut s, Direction::Backward, 1, &mut f.rng).is_err());
}

#[test]
fn opaque_payload_needs_secret_and_key() {
    let mut f = fixture();
    let mut s = f.start(ChallengeSpec::new(VaKind::Validation, Visibility::Opaque), 1);
    let secret = s.opaque_secret.unwrap();
    let c = issue_challenge(&mut s, Direction::Forward, 1, &mut f.rng).unwrap();
    assert!(crypto::decrypt(&f.b.0, &c.payload).is_err());
    let inner = crypto::open_symmetric(&secret, &c.payload).unwrap();
    let plain = crypto::decrypt(&f.b.0, &inner).unwrap();
    assert!(plain.ends_with(DEFAULT_TEMPLATE));
    assert!(!c.payload.windows(DEFAULT_TEMPLATE.len()).any(|w| w == DEFAULT_TEMPLATE));

    fulfil_challenge(&mut s, &f.b.0, &c, FulfilOutcome::Correct, 1, &mut f.rng).unwrap();
    let ev = evaluate(&mut s, &f.a.0, Verdict::Accept, 1).unwrap();
    assert!(ev.result.is_success());
    assert!(ev.signature.is_none());
}

#[test]
fn impostor_cannot_decrypt() {
    let mut f = fixture();
    let mut s = f.start(ChallengeSpec::validation(), 1);
    let c = issue_challenge(&mut s, Direction::Forward, 1, &mut f.rng).unwrap();
    let err = fulfil_challenge(&mut s, &f.c.0, &c, FulfilOutcome::Correct, 1, &mut f.rng).unwrap_err();
    assert_eq!(err, ProtocolError::Crypto(CryptoError::DecryptionFailure));
}

#[test]
fn silence_times_out_as_no_response() {
    let mut f = fixture();
    let mut s = f.start(ChallengeSpec::validation(), 1);
    let c = issue_challenge(&mut s, Direction::Forward, 1, &mut f.rng).unwrap();
    assert_eq!(fulfil_challenge(&mut s, &f.b.0, &c, FulfilOutcome::None, 1, &mut f.rng).unwrap(), None);
    assert_eq!(
        evaluate(&mut s, &f.a.0, Verdict::Accept, 15).unwrap_err(),
        ProtocolError::DeadlineNotReached { deadline: 15 }
    );
    let ev = evaluate(&mut s, &f.a.0, Verdict::Accept, 16).unwrap();
    assert_eq!(ev.result.failure_reason, Some(FailureReason::NoResponse));
    assert_eq!(s.state, SessionState::Failed);
    assert!(issue_challenge(&mut s, Direction::Backward, 16, &mut f.rng).is_err());
}

#[test]
fn failure_reasons() {
    let mut f = fixture();

    let mut s = f.start(ChallengeSpec::validation(), 1);
    let c = issue_challenge(&mut s, Direction::Forward, 1, &mut f.rng).unwrap();
    fulfil_challenge(&mut s, &f.b.0, &c, FulfilOutcome::Correct, 1, &mut f.rng).unwrap();
    s.forward.response.as_mut().unwrap().responder_signature[3] ^= 1;
    let ev = evaluate(&mut s, &f.a.0, Verdict::Accept, 1).unwrap();
    assert_eq!(ev.result.failure_reason, Some(FailureReason::BadSignature));
    // Only the result is documented; the forged response never reaches the chain.
    f.post_both(&s, 2);
    assert_eq!(f.chain.results_for(&c.challenge_id).count(), 1);
    assert_eq!(f.chain.responses_to(&c.challenge_id).count(), 0);

    let mut s = f.start(ChallengeSpec::validation(), 3);
    let ev = f.run_direction(&mut s, Direction::Forward, FulfilOutcome::Wrong, 3);
    assert_eq!(ev.result.failure_reason, Some(FailureReason::Unsatisfactory));

    let mut s = f.start(ChallengeSpec::authentication(), 3);
    let c = issue_challenge(&mut s, Direction::Forward, 3, &mut f.rng).unwrap();
    fulfil_challenge(&mut s, &f.b.0, &c, FulfilOutcome::Correct, 3, &mut f.rng).unwrap();
    let ev = evaluate(&mut s, &f.a.0, Verdict::Reject, 3).unwrap();
    assert_eq!(ev.result.failure_reason, Some(FailureReason::Unsatisfactory));
    assert!(ev.signature.is_none());

    let mut s = f.start(ChallengeSpec::validation(), 3);
    let c = issue_challenge(&mut s, Direction::Forward, 3, &mut f.rng).unwrap();
    fulfil_challenge(&mut s, &f.b.0, &c, FulfilOutcome::Correct, 30, &mut f.rng).unwrap();
    let ev = evaluate(&mut s, &f.a.0, Verdict::Accept, 30).unwrap();
    assert_eq!(ev.result.failure_reason, Some(FailureReason::Timeout));
}

#[test]
fn only_the_verifier_may_conclude() {
    let mut f = fixture();
    let mut s = f.start(ChallengeSpec::validation(), 1);
    let c = issue_challenge(&mut s, Direction::Forward, 1, &mut f.rng).unwrap();
    fulfil_challenge(&mut s, &f.b.0, &c, FulfilOutcome::Correct, 1, &mut f.rng).unwrap();
    assert_eq!(evaluate(&mut s, &f.b.0, Verdict::Accept, 1).unwrap_err(), ProtocolError::WrongKey);
}

#[test]
fn signature_expiry_is_capped_by_keys() {
    let mut f = fixture();
    let s = f.run_full(ChallengeSpec::validation(), 200);
    let sig = s.forward.signature.as_ref().unwrap();
    assert_eq!(sig.expires_at, 365);
    assert!(sig.expires_at - sig.created_at <= MAX_LIFESPAN_DAYS);

    let mut spec = ChallengeSpec::validation();
    spec.signature_lifespan_days = 30;
    let s = f.run_full(spec, 10);
    assert_eq!(s.forward.signature.as_ref().unwrap().expires_at, 40);
}

#[test]
fn signature_only_for_open_success() {
    for visibility in [Visibility::Open, Visibility::Opaque] {
        for outcome in [FulfilOutcome::Correct, FulfilOutcome::Wrong] {
            let mut f = fixture();
            let mut s = f.start(ChallengeSpec::new(VaKind::Validation, visibility), 1);
            let ev = f.run_direction(&mut s, Direction::Forward, outcome, 1);
            let success = ev.result.is_success();
            assert_eq!(success, outcome == FulfilOutcome::Correct);
            assert_eq!(ev.signature.is_some(), success && visibility == Visibility::Open);
        }
    }
}

#[test]
fn mismatch_detection() {
    let mut f = fixture();

    // One side withholds its copies.
    let s = f.run_full(ChallengeSpec::validation(), 1);
    mine(&mut f.chain, post_session_records(&s, Party::Initiator), 2);
    let report = detect_posting_mismatch(&f.chain, &s.session_id);
    assert!(!report.consistent);
    assert!(report.missing_sides.iter().all(|m| m.missing_party == f.b.1.key_id));
    assert!(report.divergent_records.is_empty());

    // The verifier documents a failure against a correct response.
    let mut s = f.start(ChallengeSpec::validation(), 3);
    let c = issue_challenge(&mut s, Direction::Forward, 3, &mut f.rng).unwrap();
    fulfil_challenge(&mut s, &f.b.0, &c, FulfilOutcome::Correct, 3, &mut f.rng).unwrap();
    let ev = assert_outcome(&mut s, &f.a.0, Some(FailureReason::NoResponse), 4).unwrap();
    f.post_both(&s, 4);
    let report = detect_posting_mismatch(&f.chain, &s.session_id);
    assert!(report.missing_sides.is_empty());
    assert_eq!(
        report.divergent_records,
        vec![Divergence { record_id: ev.result.result_id, kind: DivergenceKind::UnjustifiedFailure }]
    );

    // A rubber stamp over a wrong answer.
    let mut s = f.start(ChallengeSpec::authentication(), 5);
    let c = issue_challenge(&mut s, Direction::Forward, 5, &mut f.rng).unwrap();
    fulfil_challenge(&mut s, &f.b.0, &c, FulfilOutcome::Wrong, 5, &mut f.rng).unwrap();
    assert_outcome(&mut s, &f.a.0, None, 5).unwrap();
    f.post_both(&s, 5);
    let report = detect_posting_mismatch(&f.chain, &s.session_id);
    assert_eq!(report.divergent_records[0].kind, DivergenceKind::UnjustifiedSuccess);
}

#[test]
fn rejected_authentication_is_not_flagged() {
    let mut f = fixture();
    let mut s = f.start(ChallengeSpec::authentication(), 1);
    let c = issue_challenge(&mut s, Direction::Forward, 1, &mut f.rng).unwrap();
    fulfil_challenge(&mut s, &f.b.0, &c, FulfilOutcome::Correct, 1, &mut f.rng).unwrap();
    evaluate(&mut s, &f.a.0, Verdict::Reject, 1).unwrap();
    f.post_both(&s, 1);
    assert!(detect_posting_mismatch(&f.chain, &s.session_id).consistent);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn adversary_without_key_never_passes(payload in proptest::collection::vec(any::<u8>(), 0..96), sign_with_c in any::<bool>()) {
        let mut f = fixture();
        let mut s = f.start(ChallengeSpec::validation(), 1);
        let c = issue_challenge(&mut s, Direction::Forward, 1, &mut f.rng).unwrap();
        let forger = if sign_with_c { f.c.0.clone() } else { f.a.0.clone() };
        let sig = crypto::sign(&forger, &ResponseRecord::signing_message(&c.challenge_id, &payload)).unwrap();
        let mut r = ResponseRecord {
            response_id: Digest::ZERO,
            challenge_id: c.challenge_id,
            responder_key_id: c.target_key_id,
            payload,
            responder_signature: sig,
            created_at: 1,
            posted_by: c.target_key_id,
        };
        r.response_id = r.computed_id();
        s.forward.response = Some(r);
        let ev = evaluate(&mut s, &f.a.0, Verdict::Accept, 1).unwrap();
        prop_assert!(!ev.result.is_success());
        prop_assert!(ev.signature.is_none());
    }
}
