//! Incremental per-number call counters with snapshot semantics.
//!
//! Records must be applied in `(call_date, seq)` order; a snapshot taken
//! between updates reflects exactly the records applied so far, which is
//! what "before the record" means for every counter feature.

use std::collections::{HashMap, HashSet};

use crate::call_log::{CallRecord, PhoneId};

use super::FeatureError;

#[derive(Debug, Default, Clone)]
struct Node {
    outs: u32,
    ins: u32,
    out_set: HashSet<PhoneId>,
    in_set: HashSet<PhoneId>,
    last_counterpart: Option<PhoneId>,
}

/// The four counts of one number, as of the snapshot point.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CounterSnapshot {
    pub outs: u32,
    pub ins: u32,
    pub outdegree: u32,
    pub indegree: u32,
}

/// Streaming counter state over a record prefix.
#[derive(Debug, Default, Clone)]
pub struct CounterState {
    nodes: HashMap<PhoneId, Node>,
    pairs: HashMap<(PhoneId, PhoneId), u32>,
    last_applied: Option<(i64, u64)>,
}

fn pair_key(a: PhoneId, b: PhoneId) -> (PhoneId, PhoneId) {
    if a <= b { (a, b) } else { (b, a) }
}

impl CounterState {
    pub fn new() -> Self {
        CounterState::default()
    }

    /// Applies one record. Rejects out-of-order input.
    pub fn update(&mut self, record: &CallRecord) -> Result<(), FeatureError> {
        if let Some(last) = self.last_applied {
            if record.order_key() <= last {
                return Err(FeatureError::OutOfOrder { seq: record.seq, last: last.1 });
            }
        }
        self.last_applied = Some(record.order_key());

        let caller = record.caller();
        let callee = record.callee();

        let caller_node = self.nodes.entry(caller).or_default();
        caller_node.outs += 1;
        caller_node.out_set.insert(callee);
        caller_node.last_counterpart = Some(callee);

        let callee_node = self.nodes.entry(callee).or_default();
        callee_node.ins += 1;
        callee_node.in_set.insert(caller);
        callee_node.last_counterpart = Some(caller);

        *self.pairs.entry(pair_key(caller, callee)).or_insert(0) += 1;
        Ok(())
    }

    /// Counts for `phone` over the applied prefix; unseen numbers are all
    /// zeros.
    pub fn snapshot(&self, phone: PhoneId) -> CounterSnapshot {
        match self.nodes.get(&phone) {
            Some(node) => CounterSnapshot {
                outs: node.outs,
                ins: node.ins,
                outdegree: node.out_set.len() as u32,
                indegree: node.in_set.len() as u32,
            },
            None => CounterSnapshot::default(),
        }
    }

    /// Calls between `a` and `b` (either direction) in the applied prefix.
    pub fn pair_count(&self, a: PhoneId, b: PhoneId) -> u32 {
        self.pairs.get(&pair_key(a, b)).copied().unwrap_or(0)
    }

    /// The counterpart of `phone`'s most recent call, in either direction.
    pub fn last_counterpart(&self, phone: PhoneId) -> Option<PhoneId> {
        self.nodes.get(&phone).and_then(|n| n.last_counterpart)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::call_log::{CallTag, CallType, Province};

    fn pid(n: u8) -> PhoneId {
        PhoneId::from_bytes([n; 16])
    }

    fn call(caller: u8, callee_user: u8, seq: u64) -> CallRecord {
        CallRecord {
            user_id: pid(callee_user),
            call_type: CallType::Incoming,
            other_phone: pid(caller),
            other_province: Province::new("P1"),
            user_province: Province::new("P1"),
            call_date: 1000 + seq as i64,
            call_duration: 10,
            call_contact: false,
            call_tag: CallTag::None,
            seq,
        }
    }

    #[test]
    fn first_record_counts_both_sides() {
        let mut state = CounterState::new();
        state.update(&call(1, 2, 1)).unwrap();
        assert_eq!(
            state.snapshot(pid(1)),
            CounterSnapshot { outs: 1, ins: 0, outdegree: 1, indegree: 0 }
        );
        assert_eq!(
            state.snapshot(pid(2)),
            CounterSnapshot { outs: 0, ins: 1, outdegree: 0, indegree: 1 }
        );
        assert_eq!(state.pair_count(pid(1), pid(2)), 1);
    }

    #[test]
    fn repeat_counterpart_grows_counts_not_degree() {
        let mut state = CounterState::new();
        state.update(&call(1, 2, 1)).unwrap();
        state.update(&call(1, 2, 2)).unwrap();
        let snap = state.snapshot(pid(1));
        assert_eq!((snap.outs, snap.outdegree), (2, 1));
        assert_eq!(state.pair_count(pid(2), pid(1)), 2);
    }

    #[test]
    fn two_distinct_callees() {
        let mut state = CounterState::new();
        state.update(&call(1, 2, 1)).unwrap();
        state.update(&call(1, 3, 2)).unwrap();
        assert_eq!(
            state.snapshot(pid(1)),
            CounterSnapshot { outs: 2, ins: 0, outdegree: 2, indegree: 0 }
        );
        assert_eq!(state.last_counterpart(pid(1)), Some(pid(3)));
    }

    #[test]
    fn unseen_phone_is_all_zeros() {
        let state = CounterState::new();
        assert_eq!(state.snapshot(pid(9)), CounterSnapshot::default());
        assert_eq!(state.pair_count(pid(9), pid(8)), 0);
        assert_eq!(state.last_counterpart(pid(9)), None);
    }

    #[test]
    fn out_of_order_is_rejected() {
        let mut state = CounterState::new();
        state.update(&call(1, 2, 5)).unwrap();
        let err = state.update(&call(1, 2, 4)).unwrap_err();
        assert!(matches!(err, FeatureError::OutOfOrder { seq: 4, last: 5 }));
    }
}
