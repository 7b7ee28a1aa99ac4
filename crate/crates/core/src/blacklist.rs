//! The reputation-based black-listing baseline.
//!
//! A number is blocked once it has accrued at least `M` malicious
//! labels (per-number overrides supported). Under full labeling every
//! malicious call is labeled, so the blacklist always passes the first
//! `M` calls of a fresh number: its first prediction is pinned at
//! `M + 1` and its reduction rate at zero, which is the comparison
//! target for the learned models.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::call_log::{CallTag, PhoneId};
use crate::metrics::MetricError;

/// Per-number malicious-label counts against a blocking threshold.
#[derive(Debug, Clone)]
pub struct BlacklistState {
    default_threshold: u32,
    overrides: HashMap<PhoneId, u32>,
    counts: HashMap<PhoneId, u32>,
}

impl BlacklistState {
    pub fn new(default_threshold: u32) -> Self {
        BlacklistState { default_threshold, overrides: HashMap::new(), counts: HashMap::new() }
    }

    /// Sets a per-number threshold (e.g. a frequently mislabeled service
    /// number gets a high one).
    pub fn set_threshold(&mut self, phone: PhoneId, threshold: u32) {
        self.overrides.insert(phone, threshold);
    }

    pub fn threshold(&self, phone: PhoneId) -> u32 {
        self.overrides.get(&phone).copied().unwrap_or(self.default_threshold)
    }

    pub fn label_count(&self, phone: PhoneId) -> u32 {
        self.counts.get(&phone).copied().unwrap_or(0)
    }

    /// Counts the label iff its tag is malicious; counts never decrease.
    pub fn process_label(&mut self, phone: PhoneId, tag: CallTag) {
        if tag.is_malicious() {
            *self.counts.entry(phone).or_insert(0) += 1;
        }
    }

    pub fn is_blocked(&self, phone: PhoneId) -> bool {
        self.label_count(phone) >= self.threshold(phone)
    }

    /// Snapshot of every counted number, ordered for stable output.
    pub fn snapshot(&self) -> BlacklistSnapshot {
        let entries = self
            .counts
            .iter()
            .map(|(&phone, &count)| {
                (phone, BlacklistEntry { count, blocked: count >= self.threshold(phone) })
            })
            .collect();
        BlacklistSnapshot { default_threshold: self.default_threshold, entries }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlacklistEntry {
    pub count: u32,
    pub blocked: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlacklistSnapshot {
    pub default_threshold: u32,
    pub entries: BTreeMap<PhoneId, BlacklistEntry>,
}

/// First prediction of the blacklist under full labeling: the first `m`
/// calls always pass, so the capped index is `m + 1` no matter how many
/// records the number has.
pub fn baseline_fp(records: usize, m: u32) -> Result<u32, MetricError> {
    if records == 0 {
        return Err(MetricError::EmptyInput("per-number records"));
    }
    if m == 0 {
        return Err(MetricError::InvalidParam("label threshold m must be >= 1".into()));
    }
    Ok(m + 1)
}

/// Uncapped index of the first call that finds the number already
/// blocked, replaying the actual tags; `None` if it never blocks within
/// the given records. Label drops push this later, never earlier.
pub fn baseline_first_blocked(tags: &[CallTag], m: u32) -> Option<usize> {
    let mut count = 0u32;
    for (i, tag) in tags.iter().enumerate() {
        if count >= m {
            return Some(i + 1);
        }
        if tag.is_malicious() {
            count += 1;
        }
    }
    None
}
