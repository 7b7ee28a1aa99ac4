//! Streaming extraction of prediction instances.
//!
//! [`FeatureStream`] consumes a log in order. For every record it keeps
//! the counters current and appends a per-record feature row to each
//! non-user party's history buffer; when a record qualifies as a
//! prediction instance (an incoming call to an app user from a
//! non-user caller) the instance is extracted *before* the record is
//! applied, so every count is a strictly-before snapshot and the
//! history holds only prior records.

use std::collections::{HashMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::call_log::{CallRecord, CallType, LogMeta, PhoneId};
use crate::timeutil;

use super::counters::CounterState;
use super::{FeatureError, FeatureId};

/// Knobs of the extraction pipeline.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureParams {
    /// Most recent caller records kept for historic averaging.
    pub history_cap: usize,
    /// Fixed offset applied before calendar decomposition.
    pub tz_offset_secs: i64,
}

impl Default for FeatureParams {
    fn default() -> Self {
        FeatureParams { history_cap: 100, tz_offset_secs: 0 }
    }
}

/// Per-feature means over the caller's prior records; all zero when the
/// history is empty.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct HistoricMeans {
    pub is_in_contact: f64,
    /// Fraction of history records the owner placed (rather than received).
    pub call_type: f64,
    pub duration: f64,
    pub weekday: f64,
    pub hour: f64,
    pub same_location: f64,
    pub caller_outs: f64,
    pub caller_ins: f64,
    pub caller_outdegree: f64,
    pub caller_indegree: f64,
    pub callee_outs: f64,
    pub callee_ins: f64,
    pub callee_outdegree: f64,
    pub callee_indegree: f64,
    pub is_redial: f64,
    pub gap_to_next: f64,
}

impl HistoricMeans {
    pub fn as_array(&self) -> [f64; 16] {
        [
            self.is_in_contact,
            self.call_type,
            self.duration,
            self.weekday,
            self.hour,
            self.same_location,
            self.caller_outs,
            self.caller_ins,
            self.caller_outdegree,
            self.caller_indegree,
            self.callee_outs,
            self.callee_ins,
            self.callee_outdegree,
            self.callee_indegree,
            self.is_redial,
            self.gap_to_next,
        ]
    }
}

/// One prediction instance: the 13 current features, the 16 historic
/// means, and the auxiliary history length.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawFeatures {
    pub is_in_contact: bool,
    pub weekday: u8,
    pub hour: u8,
    pub same_location: bool,
    pub caller_outs: u32,
    pub caller_ins: u32,
    pub caller_outdegree: u32,
    pub caller_indegree: u32,
    pub callee_outs: u32,
    pub callee_ins: u32,
    pub callee_outdegree: u32,
    pub callee_indegree: u32,
    pub n_call: u32,
    pub hist: HistoricMeans,
    pub history_len: u32,
}

impl RawFeatures {
    /// Raw (pre-encoding) value of one feature.
    pub fn value(&self, feature: FeatureId) -> f64 {
        use FeatureId::*;
        match feature {
            IsInContact => self.is_in_contact as u8 as f64,
            Weekday => self.weekday as f64,
            Hour => self.hour as f64,
            SameLocation => self.same_location as u8 as f64,
            CallerOuts => self.caller_outs as f64,
            CallerIns => self.caller_ins as f64,
            CallerOutdegree => self.caller_outdegree as f64,
            CallerIndegree => self.caller_indegree as f64,
            CalleeOuts => self.callee_outs as f64,
            CalleeIns => self.callee_ins as f64,
            CalleeOutdegree => self.callee_outdegree as f64,
            CalleeIndegree => self.callee_indegree as f64,
            NCall => self.n_call as f64,
            HistIsInContact => self.hist.is_in_contact,
            HistCallType => self.hist.call_type,
            HistDuration => self.hist.duration,
            HistWeekday => self.hist.weekday,
            HistHour => self.hist.hour,
            HistSameLocation => self.hist.same_location,
            HistCallerOuts => self.hist.caller_outs,
            HistCallerIns => self.hist.caller_ins,
            HistCallerOutdegree => self.hist.caller_outdegree,
            HistCallerIndegree => self.hist.caller_indegree,
            HistCalleeOuts => self.hist.callee_outs,
            HistCalleeIns => self.hist.callee_ins,
            HistCalleeOutdegree => self.hist.callee_outdegree,
            HistCalleeIndegree => self.hist.callee_indegree,
            HistIsRedial => self.hist.is_redial,
            HistGapToNext => self.hist.gap_to_next,
            HistoryLen => self.history_len as f64,
        }
    }
}

/// Per-record feature row buffered in a number's history.
#[derive(Debug, Clone)]
pub struct HistoryRow {
    /// The owner placed this call.
    pub outgoing: bool,
    pub in_contact: bool,
    pub duration: u32,
    pub weekday: u8,
    pub hour: u8,
    pub same_location: bool,
    /// caller outs/ins/outdegree/indegree then callee likewise, counted
    /// strictly before the record, for the record's own caller and callee.
    pub counters: [u32; 8],
    pub is_redial: bool,
    pub call_date: i64,
    /// Seconds to the owner's next record; pending for the newest row.
    pub gap_to_next: Option<i64>,
}

/// Per-feature means over buffered history rows. A pending gap on the
/// newest row runs up to `current_date`. Empty input yields zeros.
pub fn aggregate_history<'a>(
    rows: impl Iterator<Item = &'a HistoryRow>,
    current_date: i64,
) -> (HistoricMeans, u32) {
    let mut sum = HistoricMeans::default();
    let mut len = 0u32;
    for row in rows {
        sum.is_in_contact += row.in_contact as u8 as f64;
        sum.call_type += row.outgoing as u8 as f64;
        sum.duration += row.duration as f64;
        sum.weekday += row.weekday as f64;
        sum.hour += row.hour as f64;
        sum.same_location += row.same_location as u8 as f64;
        sum.caller_outs += row.counters[0] as f64;
        sum.caller_ins += row.counters[1] as f64;
        sum.caller_outdegree += row.counters[2] as f64;
        sum.caller_indegree += row.counters[3] as f64;
        sum.callee_outs += row.counters[4] as f64;
        sum.callee_ins += row.counters[5] as f64;
        sum.callee_outdegree += row.counters[6] as f64;
        sum.callee_indegree += row.counters[7] as f64;
        sum.is_redial += row.is_redial as u8 as f64;
        // The newest row's gap runs up to the current call.
        sum.gap_to_next += row.gap_to_next.unwrap_or(current_date - row.call_date) as f64;
        len += 1;
    }
    if len == 0 {
        return (HistoricMeans::default(), 0);
    }
    let n = len as f64;
    let means = HistoricMeans {
        is_in_contact: sum.is_in_contact / n,
        call_type: sum.call_type / n,
        duration: sum.duration / n,
        weekday: sum.weekday / n,
        hour: sum.hour / n,
        same_location: sum.same_location / n,
        caller_outs: sum.caller_outs / n,
        caller_ins: sum.caller_ins / n,
        caller_outdegree: sum.caller_outdegree / n,
        caller_indegree: sum.caller_indegree / n,
        callee_outs: sum.callee_outs / n,
        callee_ins: sum.callee_ins / n,
        callee_outdegree: sum.callee_outdegree / n,
        callee_indegree: sum.callee_indegree / n,
        is_redial: sum.is_redial / n,
        gap_to_next: sum.gap_to_next / n,
    };
    (means, len)
}

/// Streaming extractor over one ordered log.
#[derive(Debug, Clone)]
pub struct FeatureStream {
    params: FeatureParams,
    registry: HashSet<PhoneId>,
    counters: CounterState,
    histories: HashMap<PhoneId, VecDeque<HistoryRow>>,
}

impl FeatureStream {
    pub fn new(meta: &LogMeta, params: FeatureParams) -> Self {
        FeatureStream {
            params,
            registry: meta.registry.iter().copied().collect(),
            counters: CounterState::new(),
            histories: HashMap::new(),
        }
    }

    pub fn params(&self) -> FeatureParams {
        self.params
    }

    pub fn counters(&self) -> &CounterState {
        &self.counters
    }

    /// Incoming call to an app user from a non-user caller.
    pub fn qualifies(&self, record: &CallRecord) -> bool {
        record.call_type == CallType::Incoming && !self.registry.contains(&record.other_phone)
    }

    /// History rows currently buffered for `phone`, oldest first.
    pub fn history(&self, phone: PhoneId) -> impl Iterator<Item = &HistoryRow> {
        self.histories.get(&phone).into_iter().flatten()
    }

    /// Builds the instance for `record` from the state strictly before
    /// it. Must be called before [`FeatureStream::apply`] on the same
    /// record.
    pub fn extract(&self, record: &CallRecord) -> Result<RawFeatures, FeatureError> {
        if !self.qualifies(record) {
            return Err(FeatureError::NotPredictable {
                seq: record.seq,
                reason: if record.call_type != CallType::Incoming {
                    "not an incoming call".into()
                } else {
                    "caller is a registered app user".into()
                },
            });
        }
        let caller = record.caller();
        let callee = record.callee();
        let caller_snap = self.counters.snapshot(caller);
        let callee_snap = self.counters.snapshot(callee);

        let mut raw = RawFeatures {
            is_in_contact: record.call_contact,
            weekday: timeutil::weekday(record.call_date, self.params.tz_offset_secs),
            hour: timeutil::hour(record.call_date, self.params.tz_offset_secs),
            same_location: record.same_location(),
            caller_outs: caller_snap.outs,
            caller_ins: caller_snap.ins,
            caller_outdegree: caller_snap.outdegree,
            caller_indegree: caller_snap.indegree,
            callee_outs: callee_snap.outs,
            callee_ins: callee_snap.ins,
            callee_outdegree: callee_snap.outdegree,
            callee_indegree: callee_snap.indegree,
            n_call: self.counters.pair_count(caller, callee) + 1,
            hist: HistoricMeans::default(),
            history_len: 0,
        };

        if let Some(rows) = self.histories.get(&caller) {
            let (means, len) = aggregate_history(rows.iter(), record.call_date);
            raw.hist = means;
            raw.history_len = len;
        }
        Ok(raw)
    }

    /// Applies `record`: updates counters and both non-user parties'
    /// history buffers. Records must arrive in `(call_date, seq)` order.
    pub fn apply(&mut self, record: &CallRecord) -> Result<(), FeatureError> {
        let caller = record.caller();
        let callee = record.callee();
        let caller_snap = self.counters.snapshot(caller);
        let callee_snap = self.counters.snapshot(callee);
        let is_redial = self.counters.last_counterpart(caller) == Some(callee);

        // Ordering is enforced here, before any state is touched.
        self.counters.update(record)?;

        let base = HistoryRow {
            outgoing: false,
            in_contact: record.call_contact,
            duration: record.call_duration,
            weekday: timeutil::weekday(record.call_date, self.params.tz_offset_secs),
            hour: timeutil::hour(record.call_date, self.params.tz_offset_secs),
            same_location: record.same_location(),
            counters: [
                caller_snap.outs,
                caller_snap.ins,
                caller_snap.outdegree,
                caller_snap.indegree,
                callee_snap.outs,
                callee_snap.ins,
                callee_snap.outdegree,
                callee_snap.indegree,
            ],
            is_redial,
            call_date: record.call_date,
            gap_to_next: None,
        };

        for party in [caller, callee] {
            if self.registry.contains(&party) {
                continue;
            }
            let rows = self.histories.entry(party).or_default();
            if let Some(last) = rows.back_mut() {
                if last.gap_to_next.is_none() {
                    last.gap_to_next = Some(record.call_date - last.call_date);
                }
            }
            let mut row = base.clone();
            row.outgoing = party == caller;
            rows.push_back(row);
            if rows.len() > self.params.history_cap {
                rows.pop_front();
            }
        }
        Ok(())
    }

    /// Extract-if-qualifying, then apply.
    pub fn process(&mut self, record: &CallRecord) -> Result<Option<RawFeatures>, FeatureError> {
        let raw = if self.qualifies(record) { Some(self.extract(record)?) } else { None };
        self.apply(record)?;
        Ok(raw)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::call_log::{CallTag, LogMeta, Province};
    use std::collections::BTreeSet;

    fn pid(n: u8) -> PhoneId {
        PhoneId::from_bytes([n; 16])
    }

    fn meta(users: &[u8]) -> LogMeta {
        LogMeta {
            provinces: vec![Province::new("P1"), Province::new("P2")],
            seed: 0,
            start_epoch: 0,
            days: 1,
            registry: users.iter().map(|&n| pid(n)).collect::<BTreeSet<_>>(),
        }
    }

    fn incoming(caller: u8, user: u8, date: i64, seq: u64) -> CallRecord {
        CallRecord {
            user_id: pid(user),
            call_type: CallType::Incoming,
            other_phone: pid(caller),
            other_province: Province::new("P1"),
            user_province: Province::new("P2"),
            call_date: date,
            call_duration: 30,
            call_contact: false,
            call_tag: CallTag::None,
            seq,
        }
    }

    fn outgoing(user: u8, other: u8, date: i64, seq: u64) -> CallRecord {
        CallRecord {
            user_id: pid(user),
            call_type: CallType::Outgoing,
            other_phone: pid(other),
            other_province: Province::new("P1"),
            user_province: Province::new("P2"),
            call_date: date,
            call_duration: 30,
            call_contact: false,
            call_tag: CallTag::None,
            seq,
        }
    }

    #[test]
    fn empty_history_yields_zero_block_and_n_call_one() {
        let stream = FeatureStream::new(&meta(&[1]), FeatureParams::default());
        let raw = stream.extract(&incoming(2, 1, 3600, 0)).unwrap();
        assert_eq!(raw.n_call, 1);
        assert_eq!(raw.history_len, 0);
        assert_eq!(raw.hist, HistoricMeans::default());
        assert_eq!(raw.caller_outs, 0);
        assert_eq!(raw.hour, 1);
        assert_eq!(raw.weekday, 3);
    }

    #[test]
    fn non_qualifying_records_are_contract_errors() {
        let stream = FeatureStream::new(&meta(&[1, 2]), FeatureParams::default());
        assert!(matches!(
            stream.extract(&outgoing(1, 3, 0, 0)),
            Err(FeatureError::NotPredictable { .. })
        ));
        // Incoming, but the caller is a registered app user.
        assert!(matches!(
            stream.extract(&incoming(2, 1, 0, 0)),
            Err(FeatureError::NotPredictable { .. })
        ));
    }

    #[test]
    fn three_call_redial_scenario() {
        // B calls A at t1 and t2, then the instance at t3:
        // n_call = 3; the second history call is a redial, the first
        // cannot be, so the historic redial mean is 0.5.
        let mut stream = FeatureStream::new(&meta(&[1]), FeatureParams::default());
        stream.apply(&incoming(2, 1, 1_000, 0)).unwrap();
        stream.apply(&incoming(2, 1, 2_000, 1)).unwrap();
        let raw = stream.extract(&incoming(2, 1, 3_500, 2)).unwrap();
        assert_eq!(raw.n_call, 3);
        assert_eq!(raw.history_len, 2);
        assert_eq!(raw.hist.is_redial, 0.5);
        // All history was outgoing from B's perspective.
        assert_eq!(raw.hist.call_type, 1.0);
        // Gaps: 1000 (t1 to t2) and 1500 (t2 to the current call).
        assert_eq!(raw.hist.gap_to_next, (1_000.0 + 1_500.0) / 2.0);
        assert_eq!(raw.hist.duration, 30.0);
        // Counter snapshots before t1: zeros; before t2: B outs=1.
        assert_eq!(raw.hist.caller_outs, 0.5);
        assert_eq!(raw.caller_outs, 2);
    }

    #[test]
    fn history_includes_both_directions_of_the_owner() {
        // B calls A, then A calls B back; B's next instance sees both.
        let mut stream = FeatureStream::new(&meta(&[1]), FeatureParams::default());
        stream.apply(&incoming(2, 1, 1_000, 0)).unwrap();
        stream.apply(&outgoing(1, 2, 2_000, 1)).unwrap();
        let raw = stream.extract(&incoming(2, 1, 3_000, 2)).unwrap();
        assert_eq!(raw.history_len, 2);
        // One of two history records was placed by B.
        assert_eq!(raw.hist.call_type, 0.5);
        // The callback is a redial: A's previous call was with B.
        assert_eq!(raw.hist.is_redial, 0.5);
        // n_call counts the pair in both directions.
        assert_eq!(raw.n_call, 3);
    }

    #[test]
    fn history_cap_keeps_most_recent_rows() {
        let params = FeatureParams { history_cap: 3, ..FeatureParams::default() };
        let mut stream = FeatureStream::new(&meta(&[1]), params);
        for i in 0..10u64 {
            stream.apply(&incoming(2, 1, 1_000 * (i as i64 + 1), i)).unwrap();
        }
        let raw = stream.extract(&incoming(2, 1, 60_000, 10)).unwrap();
        assert_eq!(raw.history_len, 3);
        // Rows 7, 8, 9 survive; caller_outs snapshots are 7, 8, 9.
        assert_eq!(raw.hist.caller_outs, 8.0);
    }

    #[test]
    fn app_users_accumulate_no_history() {
        let mut stream = FeatureStream::new(&meta(&[1]), FeatureParams::default());
        stream.apply(&incoming(2, 1, 1_000, 0)).unwrap();
        assert_eq!(stream.history(pid(1)).count(), 0);
        assert_eq!(stream.history(pid(2)).count(), 1);
    }
}
