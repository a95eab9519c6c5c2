//! Fixtures shared by unit tests.

use crate::chain::Chain;
use crate::crypto::{generate_keypair, KeyMaterial, SchemeId};
use rand::RngCore;

use crate::protocol::{
    evaluate, fulfil_challenge, issue_challenge, post_session_records, start_session, ChallengeSpec, Direction,
    FulfilOutcome, Party, Verdict,
};
use crate::records::{Day, EntityDescriptor, PublicKeyRecord, Record};

pub fn toy_key(seed: u64) -> KeyMaterial {
    generate_keypair(SchemeId::ToyDeterministic, seed, 2048).unwrap()
}

pub fn register(name: &str, key: &KeyMaterial, created: Day) -> PublicKeyRecord {
    let email = format!("{}@example.org", name.to_lowercase());
    PublicKeyRecord::new(EntityDescriptor::email(name, &email), key, created, created + 365).unwrap()
}

/// A key pair with its registration record.
pub fn actor(name: &str, seed: u64, created: Day) -> (KeyMaterial, PublicKeyRecord) {
    let key = toy_key(seed);
    let rec = register(name, &key, created);
    (key, rec)
}

pub fn mine(chain: &mut Chain, records: Vec<Record>, day: Day) {
    let block = chain.mine_block(records, day).unwrap();
    chain.append_block(block).unwrap();
}

/// Genesis at day 0 followed by `n - 1` blocks, block `i` stamped day `i`
/// and registering one key.
pub fn key_chain(n: u64, difficulty: u8) -> Chain {
    let (_, first) = actor("K0", 0, 0);
    let mut chain = Chain::new(difficulty, 0, vec![first.into()]).unwrap();
    for i in 1..n {
        let (_, rec) = actor(&format!("K{i}"), i, i as Day);
        mine(&mut chain, vec![rec.into()], i as Day);
    }
    chain
}

/// Runs a full bidirectional session in which both sides answer correctly
/// and the verifiers accept, returning what both parties post.
pub fn honest_session(
    chain: &Chain,
    initiator: &(KeyMaterial, PublicKeyRecord),
    responder: &(KeyMaterial, PublicKeyRecord),
    spec: ChallengeSpec,
    now: Day,
    rng: &mut dyn RngCore,
) -> Vec<Record> {
    let mut s = start_session(chain, &initiator.1.key_id, &responder.1.key_id, spec, now, 2048, rng).unwrap();
    for (d, verifier, target) in
        [(Direction::Forward, initiator, responder), (Direction::Backward, responder, initiator)]
    {
        let c = issue_challenge(&mut s, d, now, rng).unwrap();
        fulfil_challenge(&mut s, &target.0, &c, FulfilOutcome::Correct, now, rng).unwrap();
        evaluate(&mut s, &verifier.0, Verdict::Accept, now).unwrap();
    }
    let mut records = post_session_records(&s, Party::Initiator);
    records.extend(post_session_records(&s, Party::Responder));
    records
}
