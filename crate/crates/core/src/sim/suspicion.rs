use std::collections::BTreeSet;

use crate::chain::Chain;
use crate::crypto::Digest;
use crate::keylife::signature_active;
use crate::records::{Day, Record};

use super::SimError;

/// Keys holding an active signature over `exposed_key_id` as of `now`.
///
/// One hop only: endorsers of endorsers are not questioned automatically.
pub fn suspicion_closure(chain: &Chain, exposed_key_id: &Digest, now: Day) -> Result<BTreeSet<Digest>, SimError> {
    if chain.key_record(exposed_key_id).is_none() {
        return Err(SimError::UnknownKey(*exposed_key_id));
    }
    Ok(chain
        .records_for_key(exposed_key_id)
        .filter_map(|(_, r)| match r {
            Record::Signature(s) if &s.signee_key_id == exposed_key_id && signature_active(chain, s, now) => {
                Some(s.signer_key_id)
            }
            _ => None,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::keylife::revoke_signature;
    use crate::protocol::ChallengeSpec;
    use crate::testutil::{actor, honest_session, mine};

    fn brute_force(chain: &Chain, key: &Digest, now: Day) -> BTreeSet<Digest> {
        chain
            .records()
            .filter_map(|(_, r)| match r {
                Record::Signature(s) if &s.signee_key_id == key && signature_active(chain, s, now) => {
                    Some(s.signer_key_id)
                }
                _ => None,
            })
            .collect()
    }

    #[test]
    fn direct_endorsers_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = actor("S", 10, 0);
        let a = actor("A", 11, 0);
        let b = actor("B", 12, 0);
        let c = actor("C", 13, 0);
        let d = actor("D", 14, 0);
        let founders = [&s, &a, &b, &c, &d].iter().map(|x| x.1.clone().into()).collect();
        let mut chain = Chain::new(2, 0, founders).unwrap();

        let mut records = Vec::new();
        for endorser in [&a, &b, &c] {
            records.extend(honest_session(&chain, endorser, &s, ChallengeSpec::authentication(), 1, &mut rng));
        }
        records.extend(honest_session(&chain, &d, &a, ChallengeSpec::validation(), 1, &mut rng));
        mine(&mut chain, records, 1);

        let expected: BTreeSet<Digest> = [a.1.key_id, b.1.key_id, c.1.key_id].into();
        assert_eq!(suspicion_closure(&chain, &s.1.key_id, 2).unwrap(), expected);
        assert_eq!(brute_force(&chain, &s.1.key_id, 2), expected);
        // D endorsed A, but is not questioned through A.
        assert!(!suspicion_closure(&chain, &s.1.key_id, 2).unwrap().contains(&d.1.key_id));
        assert!(suspicion_closure(&chain, &d.1.key_id, 2).unwrap().contains(&a.1.key_id));

        let sig = chain
            .signatures()
            .find_map(|(_, r)| match r {
                Record::Signature(x) if x.signer_key_id == b.1.key_id && x.signee_key_id == s.1.key_id => {
                    Some(x.signature_id)
                }
                _ => None,
            })
            .unwrap();
        let rev = revoke_signature(&chain, &sig, &b.0, 3).unwrap();
        mine(&mut chain, vec![rev.into()], 3);
        let after = suspicion_closure(&chain, &s.1.key_id, 3).unwrap();
        assert_eq!(after, [a.1.key_id, c.1.key_id].into());
        assert_eq!(after, brute_force(&chain, &s.1.key_id, 3));
    }

    #[test]
    fn unendorsed_and_unknown_keys() {
        let s = actor("S", 10, 0);
        let chain = Chain::new(2, 0, vec![s.1.clone().into()]).unwrap();
        assert!(suspicion_closure(&chain, &s.1.key_id, 0).unwrap().is_empty());
        assert!(matches!(suspicion_closure(&chain, &Digest::ZERO, 0), Err(SimError::UnknownKey(_))));
    }
}
