use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::crypto::Digest;
use crate::protocol::detect_posting_mismatch;
use crate::records::{FailureReason, Record, VaKind};
use crate::var::var_statistics;

use super::{
    monitor_certificates, reachability_report, suspicion_closure, AccountState, Reachability, Role, SimError, World,
};

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub seed: u64,
    pub blocks: u64,
    pub tip_hash: Digest,
    pub honest_keys: usize,
    pub sybil_keys: usize,
    /// Sybil keys with a documented failure that needed a wrong answer.
    pub sybils_exposed: usize,
    pub sybils_exposed_fraction: f64,
    pub honest_falsely_flagged: usize,
    /// Keys holding an active signature over some exposed key.
    pub questioned_keys: usize,
    pub signatures_validation: usize,
    pub signatures_authentication: usize,
    pub vars_generated: usize,
    pub vars_fulfilled: usize,
    pub vars_failed: usize,
    pub vars_expired: usize,
    pub vars_open: usize,
    pub dead_accounts: usize,
    pub dead_addresses_detected: usize,
    pub reachable_flagged_dead: usize,
    /// Sessions whose posted records contradict each other.
    pub mismatches_detected: usize,
    pub cert_mismatches: usize,
}

/// Keys that failed a challenge in a way only a wrong answer explains.
pub(super) fn exposed_keys(chain: &crate::chain::Chain) -> BTreeSet<Digest> {
    chain
        .results()
        .filter_map(|(_, r)| match r {
            Record::VaResult(v)
                if matches!(v.failure_reason, Some(FailureReason::Unsatisfactory | FailureReason::BadSignature)) =>
            {
                Some(v.target_key_id)
            }
            _ => None,
        })
        .collect()
}

/// Derives the metrics from the chain, using the world only for ground truth
/// about who is a sybil and whose account is dead.
pub fn collect_metrics(world: &World) -> Result<Metrics, SimError> {
    let chain = &world.chain;
    let now = chain.tip().timestamp;
    let is_sybil = |k: &Digest| world.owner_of(k).is_some_and(|a| a.profile.role == Role::Sybil);

    let all_keys: Vec<Digest> = chain.keys().map(|(_, k)| k.key_id).collect();
    let sybil_keys = all_keys.iter().filter(|k| is_sybil(k)).count();
    let honest_keys = all_keys.len() - sybil_keys;

    let exposed = exposed_keys(chain);
    let sybils_exposed = exposed.iter().filter(|k| is_sybil(k)).count();
    let mut questioned = BTreeSet::new();
    for k in &exposed {
        questioned.extend(suspicion_closure(chain, k, now)?);
    }

    let (mut signatures_validation, mut signatures_authentication) = (0, 0);
    for (_, r) in chain.signatures() {
        if let Record::Signature(s) = r {
            match s.kind {
                VaKind::Validation => signatures_validation += 1,
                VaKind::Authentication => signatures_authentication += 1,
            }
        }
    }

    let vars = var_statistics(chain, world.params());

    let reach = reachability_report(chain, now);
    let (mut dead_accounts, mut dead_addresses_detected, mut reachable_flagged_dead) = (0, 0, 0);
    for a in &world.actors {
        let flagged = reach.get(&a.profile.email) == Some(&Reachability::Dead);
        match a.profile.account_state {
            AccountState::Dead => {
                dead_accounts += 1;
                dead_addresses_detected += flagged as usize;
            }
            AccountState::Reachable => reachable_flagged_dead += flagged as usize,
        }
    }

    let sessions: BTreeSet<Digest> = chain
        .results()
        .filter_map(|(_, r)| match r {
            Record::VaResult(v) => Some(v.session_id),
            _ => None,
        })
        .collect();
    let mismatches_detected =
        sessions.iter().filter(|s| !detect_posting_mismatch(chain, s).divergent_records.is_empty()).count();

    let cert_mismatches = monitor_certificates(&world.observations).iter().map(|r| r.mismatches.len()).sum();

    Ok(Metrics {
        seed: world.config.seed,
        blocks: chain.tip().height,
        tip_hash: chain.tip().block_hash,
        honest_keys,
        sybil_keys,
        sybils_exposed,
        sybils_exposed_fraction: if sybil_keys == 0 { 0.0 } else { sybils_exposed as f64 / sybil_keys as f64 },
        honest_falsely_flagged: exposed.len() - sybils_exposed,
        questioned_keys: questioned.len(),
        signatures_validation,
        signatures_authentication,
        vars_generated: vars.total,
        vars_fulfilled: vars.fulfilled,
        vars_failed: vars.failed,
        vars_expired: vars.expired,
        vars_open: vars.open,
        dead_accounts,
        dead_addresses_detected,
        reachable_flagged_dead,
        mismatches_detected,
        cert_mismatches,
    })
}

impl Metrics {
    fn fields(&self) -> Vec<(&'static str, String)> {
        vec![
            ("seed", self.seed.to_string()),
            ("blocks", self.blocks.to_string()),
            ("tip_hash", self.tip_hash.to_hex()),
            ("honest_keys", self.honest_keys.to_string()),
            ("sybil_keys", self.sybil_keys.to_string()),
            ("sybils_exposed", self.sybils_exposed.to_string()),
            ("sybils_exposed_fraction", format!("{:.6}", self.sybils_exposed_fraction)),
            ("honest_falsely_flagged", self.honest_falsely_flagged.to_string()),
            ("questioned_keys", self.questioned_keys.to_string()),
            ("signatures_validation", self.signatures_validation.to_string()),
            ("signatures_authentication", self.signatures_authentication.to_string()),
            ("vars_generated", self.vars_generated.to_string()),
            ("vars_fulfilled", self.vars_fulfilled.to_string()),
            ("vars_failed", self.vars_failed.to_string()),
            ("vars_expired", self.vars_expired.to_string()),
            ("vars_open", self.vars_open.to_string()),
            ("dead_accounts", self.dead_accounts.to_string()),
            ("dead_addresses_detected", self.dead_addresses_detected.to_string()),
            ("reachable_flagged_dead", self.reachable_flagged_dead.to_string()),
            ("mismatches_detected", self.mismatches_detected.to_string()),
            ("cert_mismatches", self.cert_mismatches.to_string()),
        ]
    }

    /// One `key=value` line per metric.
    pub fn to_kv(&self) -> String {
        self.fields().into_iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    /// Human-readable summary.
    pub fn report(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "scenario seed {} after {} blocks (tip {})", self.seed, self.blocks, self.tip_hash.short());
        let _ = writeln!(s, "keys: {} honest, {} sybil", self.honest_keys, self.sybil_keys);
        let _ = writeln!(
            s,
            "sybils exposed: {} ({:.1}%), honest falsely flagged: {}, questioned: {}",
            self.sybils_exposed,
            100.0 * self.sybils_exposed_fraction,
            self.honest_falsely_flagged,
            self.questioned_keys
        );
        let _ = writeln!(
            s,
            "signatures: {} validation, {} authentication",
            self.signatures_validation, self.signatures_authentication
        );
        let _ = writeln!(
            s,
            "vars: {} generated, {} fulfilled, {} failed, {} expired, {} open",
            self.vars_generated, self.vars_fulfilled, self.vars_failed, self.vars_expired, self.vars_open
        );
        let _ = writeln!(
            s,
            "dead accounts: {}, detected: {}, live accounts reported dead: {}",
            self.dead_accounts, self.dead_addresses_detected, self.reachable_flagged_dead
        );
        let _ = writeln!(
            s,
            "posting mismatches: {}, certificate mismatches: {}",
            self.mismatches_detected, self.cert_mismatches
        );
        s
    }
}
