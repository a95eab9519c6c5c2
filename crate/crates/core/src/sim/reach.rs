use std::collections::BTreeMap;

use crate::chain::Chain;
use crate::records::{Day, FailureReason, IdentifierKind, Record, MAX_LIFESPAN_DAYS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Reachability {
    Alive,
    Dead,
    Unknown,
}

impl Reachability {
    pub fn as_str(self) -> &'static str {
        match self {
            Reachability::Alive => "alive",
            Reachability::Dead => "dead",
            Reachability::Unknown => "unknown",
        }
    }
}

/// Consecutive unanswered challenges after which an address counts as dead.
pub const DEAD_THRESHOLD: usize = 2;

/// Classifies every email identifier on chain from the verification results
/// documented in the trailing twelve months.
///
/// An address is dead when its most recent results are at least
/// [`DEAD_THRESHOLD`] `no_response` failures in a row; otherwise alive when
/// any result in the window is a success; otherwise unknown.
pub fn reachability_report(chain: &Chain, now: Day) -> BTreeMap<String, Reachability> {
    let mut email_of = BTreeMap::new();
    let mut report = BTreeMap::new();
    for (_, k) in chain.keys() {
        if k.owner.identifier_kind == IdentifierKind::Email {
            email_of.insert(k.key_id, k.owner.identifier.clone());
            report.insert(k.owner.identifier.clone(), Vec::new());
        }
    }
    for (r, _) in chain.traverse(MAX_LIFESPAN_DAYS, now, |r| matches!(r, Record::VaResult(_))) {
        let Record::VaResult(v) = r else { continue };
        if let Some(email) = email_of.get(&v.target_key_id) {
            report.get_mut(email).expect("email registered").push(v.failure_reason);
        }
    }
    report
        .into_iter()
        .map(|(email, results)| {
            let silent_tail = results.iter().rev().take_while(|r| **r == Some(FailureReason::NoResponse)).count();
            let class = if silent_tail >= DEAD_THRESHOLD {
                Reachability::Dead
            } else if results.iter().any(Option::is_none) {
                Reachability::Alive
            } else {
                Reachability::Unknown
            };
            (email, class)
        })
        .collect()
}
