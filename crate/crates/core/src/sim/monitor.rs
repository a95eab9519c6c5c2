use std::collections::{BTreeMap, BTreeSet};

use crate::crypto::Digest;
use crate::records::Day;

/// One vantage point's view of the key served for an identifier.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct CertObservation {
    pub vantage_id: String,
    pub identifier: String,
    pub observed_key_id: Digest,
    pub observed_at: Day,
}

/// A same-day window in which vantage points disagreed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowMismatch {
    pub day: Day,
    /// The key most vantage points saw; `None` on a tie.
    pub majority_key: Option<Digest>,
    pub divergent_vantages: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CertReport {
    pub identifier: String,
    pub windows_checked: usize,
    pub mismatches: Vec<WindowMismatch>,
}

impl CertReport {
    pub fn flagged(&self) -> bool {
        !self.mismatches.is_empty()
    }
}

/// Compares what different vantage points saw for each identifier on the
/// same day. A window is flagged when at least two vantage points saw
/// different keys.
pub fn monitor_certificates(observations: &[CertObservation]) -> Vec<CertReport> {
    let mut grouped: BTreeMap<&str, BTreeMap<Day, BTreeMap<&str, BTreeSet<Digest>>>> = BTreeMap::new();
    for o in observations {
        grouped
            .entry(&o.identifier)
            .or_default()
            .entry(o.observed_at)
            .or_default()
            .entry(&o.vantage_id)
            .or_default()
            .insert(o.observed_key_id);
    }

    grouped
        .into_iter()
        .map(|(identifier, days)| {
            let windows_checked = days.len();
            let mismatches = days
                .into_iter()
                .filter_map(|(day, views)| {
                    let keys: BTreeSet<&Digest> = views.values().flatten().collect();
                    if views.len() < 2 || keys.len() < 2 {
                        return None;
                    }
                    let mut votes: BTreeMap<&Digest, usize> = BTreeMap::new();
                    for seen in views.values() {
                        for k in seen {
                            *votes.entry(k).or_default() += 1;
                        }
                    }
                    let top = *votes.values().max().expect("non-empty");
                    let leaders: Vec<&Digest> = votes.iter().filter(|(_, n)| **n == top).map(|(k, _)| *k).collect();
                    let majority_key = (leaders.len() == 1).then(|| *leaders[0]);
                    let divergent_vantages = views
                        .iter()
                        .filter(|(_, seen)| match majority_key {
                            Some(m) => seen.len() != 1 || !seen.contains(&m),
                            None => true,
                        })
                        .map(|(v, _)| v.to_string())
                        .collect();
                    Some(WindowMismatch { day, majority_key, divergent_vantages })
                })
                .collect();
            CertReport { identifier: identifier.to_string(), windows_checked, mismatches }
        })
        .collect()
}
