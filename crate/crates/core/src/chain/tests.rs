use proptest::prelude::*;

use super::*;
use crate::crypto;
use crate::records::{RevocationKind, RevocationRecord};
use crate::testutil::{actor, key_chain, mine};

#[test]
fn difficulty_one_clears_first_bit() {
    let (_, rec) = actor("A", 1, 0);
    let chain = Chain::new(1, 0, vec![]).unwrap();
    let block = chain.mine_block(vec![rec.into()], 1).unwrap();
    assert_eq!(block.block_hash.as_bytes()[0] & 0x80, 0);
    assert_eq!(block.block_hash, block.header_hash());
}

#[test]
fn difficulty_eight_nonce_counts_are_geometric() {
    let chain = Chain::new(8, 0, vec![]).unwrap();
    let total: u64 = (0..100)
        .map(|i| {
            let (_, rec) = actor(&format!("N{i}"), 1000 + i, 0);
            chain.mine_block(vec![rec.into()], 1).unwrap().nonce + 1
        })
        .sum();
    let mean = total as f64 / 100.0;
    assert!((64.0..=1024.0).contains(&mean), "mean nonce count {mean}");
}

#[test]
fn mining_is_deterministic_and_rejects_empty() {
    let chain = key_chain(3, 8);
    let (_, rec) = actor("D", 77, 5);
    let a = chain.mine_block(vec![rec.clone().into()], 5).unwrap();
    let b = chain.mine_block(vec![rec.into()], 5).unwrap();
    assert_eq!(a, b);
    assert!(matches!(chain.mine_block(vec![], 5), Err(ChainError::EmptyPending)));
}

#[test]
fn append_checks_link_and_work() {
    let mut chain = key_chain(3, 8);
    let (_, rec) = actor("X", 50, 3);
    let block = chain.mine_block(vec![rec.into()], 3).unwrap();

    let mut broken = block.clone();
    broken.prev_hash = Digest::ZERO;
    assert!(matches!(chain.append_block(broken), Err(ChainError::BrokenLink { height: 3 })));

    let mut lazy = block.clone();
    lazy.nonce = 0;
    lazy.block_hash = lazy.header_hash();
    // Only meaningful when nonce zero really misses the target.
    assert!(lazy.block_hash.leading_zero_bits() < 8);
    assert!(matches!(chain.append_block(lazy), Err(ChainError::InsufficientWork { height: 3 })));

    let before = chain.clone();
    chain.append_block(block).unwrap();
    assert_eq!(chain.len(), 4);
    assert!(verify_chain(&before).valid);
}

#[test]
fn timestamps_may_not_regress() {
    let chain = key_chain(3, 4);
    let (_, rec) = actor("T", 60, 0);
    assert!(matches!(chain.mine_block(vec![rec.into()], 1), Err(ChainError::TimestampRegression { height: 3 })));
}

#[test]
fn untouched_chain_verifies() {
    let chain = key_chain(50, 4);
    let report = verify_chain(&chain);
    assert!(report.valid, "{:?}", report.reasons);
    assert_eq!(report.first_bad_height, None);
}

fn tamper_display_name(block: &mut Block) {
    let Record::PublicKey(k) = &mut block.records[0] else { panic!("key block expected") };
    k.owner.display_name.push('!');
}

#[test]
fn tampered_record_is_reported_at_its_height() {
    let chain = key_chain(50, 4);
    let mut blocks = chain.into_blocks();
    tamper_display_name(&mut blocks[10]);
    let report = verify_chain(&Chain::from_blocks_unchecked(4, blocks));
    assert!(!report.valid);
    assert_eq!(report.first_bad_height, Some(10));
    assert!(report.reasons.iter().any(|r| r.contains("11..=49")));
}

#[test]
fn remined_block_breaks_the_next_link() {
    let chain = key_chain(50, 4);
    let mut blocks = chain.into_blocks();
    tamper_display_name(&mut blocks[10]);
    let Record::PublicKey(k) = &mut blocks[10].records[0] else { unreachable!() };
    k.key_id = k.computed_id();

    let prefix = Chain::from_blocks_unchecked(4, blocks[..10].to_vec());
    let remined = prefix.mine_block(blocks[10].records.clone(), blocks[10].timestamp).unwrap();
    blocks[10] = remined;

    let report = verify_chain(&Chain::from_blocks_unchecked(4, blocks));
    assert_eq!(report.first_bad_height, Some(11));
}

#[test]
fn unauthorized_revocation_is_rejected() {
    let (a, ra) = actor("A", 1, 0);
    let (_, rb) = actor("B", 2, 0);
    let chain = Chain::new(4, 0, vec![ra.clone().into(), rb.clone().into()]).unwrap();
    let mut rev = RevocationRecord {
        revocation_id: Digest::ZERO,
        kind: RevocationKind::Key,
        target_id: rb.key_id,
        issuer_key_id: ra.key_id,
        issuer_signature: Vec::new(),
        created_at: 1,
    };
    rev.issuer_signature = crypto::sign(&a, &rev.signing_message()).unwrap();
    rev.revocation_id = rev.computed_id();
    let err = chain.mine_block(vec![rev.into()], 1).unwrap_err();
    assert!(matches!(err, ChainError::InvalidRecord { reason: RecordRejection::NotAuthorized, .. }));
}

#[test]
fn forged_revocation_signature_is_rejected() {
    let (_, ra) = actor("A", 1, 0);
    let (b, _) = actor("B", 2, 0);
    let chain = Chain::new(4, 0, vec![ra.clone().into()]).unwrap();
    let mut rev = RevocationRecord {
        revocation_id: Digest::ZERO,
        kind: RevocationKind::Key,
        target_id: ra.key_id,
        issuer_key_id: ra.key_id,
        issuer_signature: Vec::new(),
        created_at: 1,
    };
    rev.issuer_signature = crypto::sign(&b, &rev.signing_message()).unwrap();
    rev.revocation_id = rev.computed_id();
    assert!(chain.mine_block(vec![rev.into()], 1).is_err());
}

#[test]
fn duplicate_record_is_rejected() {
    let (_, ra) = actor("A", 1, 0);
    let chain = Chain::new(4, 0, vec![ra.clone().into()]).unwrap();
    let err = chain.mine_block(vec![ra.into()], 1).unwrap_err();
    assert!(matches!(err, ChainError::InvalidRecord { reason: RecordRejection::DuplicateRecord, .. }));
}

fn day_chain(days: &[Day]) -> Chain {
    let (_, first) = actor("D0", 500, days[0]);
    let mut chain = Chain::new(2, days[0], vec![first.into()]).unwrap();
    for (i, &d) in days.iter().enumerate().skip(1) {
        let (_, rec) = actor(&format!("D{i}"), 500 + i as u64, d);
        mine(&mut chain, vec![rec.into()], d);
    }
    chain
}

#[test]
fn traverse_window_arithmetic() {
    let chain = day_chain(&[0, 10, 35, 36, 200, 400, 401]);
    let heights: Vec<u64> = chain.traverse(365, 400, |_| true).into_iter().map(|(_, h)| h).collect();
    assert_eq!(heights, vec![2, 3, 4, 5]);

    let all = chain.traverse(10_000, 401, |_| true);
    let expected: Vec<&Record> = chain.records().map(|(_, r)| r).collect();
    assert_eq!(all.iter().map(|(r, _)| *r).collect::<Vec<_>>(), expected);
}

#[test]
fn traverse_matches_brute_force_for_a_key() {
    let chain = key_chain(20, 2);
    let target = chain.keys().nth(7).unwrap().1.key_id;
    let now = 15;
    let got: Vec<Digest> = chain
        .traverse(365, now, |r| r.involved_keys().contains(&target))
        .into_iter()
        .map(|(r, _)| r.record_id())
        .collect();
    let mut expected = Vec::new();
    for b in chain.blocks() {
        if b.timestamp > now {
            continue;
        }
        for r in &b.records {
            if r.involved_keys().contains(&target) {
                expected.push(r.record_id());
            }
        }
    }
    assert_eq!(got, expected);
    let indexed: Vec<Digest> = chain.records_for_key(&target).map(|(_, r)| r.record_id()).collect();
    assert_eq!(got, indexed);
}

#[test]
fn persist_round_trip() {
    let chain = key_chain(100, 2);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("chain.achn");
    chain.persist(&path).unwrap();
    let loaded = Chain::load(&path).unwrap();
    assert_eq!(loaded, chain);
    assert_eq!(loaded.to_bytes(), chain.to_bytes());
}

#[test]
fn truncated_file_is_corrupt() {
    let bytes = key_chain(10, 2).to_bytes();
    for cut in [3, 10, bytes.len() / 2, bytes.len() - 1] {
        assert!(matches!(Chain::from_bytes(&bytes[..cut]), Err(ChainError::CorruptFile { .. })), "cut {cut}");
    }
}

/// Byte offset at which each block starts in the chain file.
fn block_offsets(chain: &Chain) -> Vec<usize> {
    let mut offsets = Vec::new();
    let mut at = 4 + 1 + 1 + 4;
    for b in chain.blocks() {
        offsets.push(at);
        at += 8 + 32 + 32 + 4 + 8 + 32 + 4;
        at += b.records.iter().map(|r| 4 + r.to_bytes().len()).sum::<usize>();
    }
    assert_eq!(at, chain.to_bytes().len());
    offsets
}

fn height_of(offsets: &[usize], pos: usize) -> u64 {
    offsets.partition_point(|&o| o <= pos).saturating_sub(1) as u64
}

#[test]
fn flipped_record_byte_reports_its_height() {
    let chain = key_chain(20, 2);
    let offsets = block_offsets(&chain);
    let mut bytes = chain.to_bytes();
    // Inside the display name of block 12's key record.
    let pos = offsets[12] + 120 + 4 + 1 + 32 + 4;
    bytes[pos] ^= 0x01;
    match Chain::from_bytes(&bytes) {
        Err(ChainError::CorruptFile { first_bad_height, .. }) => assert_eq!(first_bad_height, 12),
        other => panic!("expected corrupt file, got {other:?}"),
    }
}

#[test]
fn header_damage_is_blamed_on_genesis() {
    let bytes = key_chain(5, 2).to_bytes();
    for pos in 0..10 {
        let mut m = bytes.clone();
        m[pos] ^= 0x10;
        let report = Chain::audit_bytes(&m);
        assert!(!report.valid);
        assert_eq!(report.first_bad_height, Some(0), "position {pos}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn every_single_byte_mutation_is_detected(pos_seed in any::<usize>(), mask in 1u8..=255) {
        thread_local! {
            static FIXTURE: (Vec<u8>, Vec<usize>) = {
                let chain = key_chain(8, 2);
                (chain.to_bytes(), block_offsets(&chain))
            };
        }
        FIXTURE.with(|(bytes, offsets)| {
            let pos = pos_seed % bytes.len();
            let mut m = bytes.clone();
            m[pos] ^= mask;
            let report = Chain::audit_bytes(&m);
            prop_assert!(!report.valid);
            prop_assert!(report.first_bad_height.unwrap() <= height_of(offsets, pos));
            Ok(())
        })?;
    }
}
