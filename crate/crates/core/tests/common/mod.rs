//! Shared test oracles, independent of the streaming implementation.
//!
//! The feature oracle recomputes every instance from scratch out of the
//! raw record slice: per-phone record lists with prefix count arrays
//! and binary searches instead of incrementally maintained state.

#![allow(dead_code)]

use std::collections::{HashMap, HashSet};

use callwarden_core::call_log::{CallRecord, PhoneId};
use callwarden_core::features::{FeatureParams, HistoricMeans, RawFeatures};
use callwarden_core::timeutil;

#[derive(Clone, Copy)]
struct Entry {
    rec_idx: usize,
    was_caller: bool,
    counterpart: PhoneId,
}

struct PhoneLog {
    entries: Vec<Entry>,
    // Prefix counts over `entries`, length entries.len() + 1.
    outs: Vec<u32>,
    ins: Vec<u32>,
    outdegree: Vec<u32>,
    indegree: Vec<u32>,
}

/// From-scratch per-phone view of a record slice.
pub struct OracleIndex<'a> {
    records: &'a [CallRecord],
    phones: HashMap<PhoneId, PhoneLog>,
    pairs: HashMap<(PhoneId, PhoneId), Vec<usize>>,
}

fn pair_key(a: PhoneId, b: PhoneId) -> (PhoneId, PhoneId) {
    if a <= b { (a, b) } else { (b, a) }
}

impl<'a> OracleIndex<'a> {
    pub fn build(records: &'a [CallRecord]) -> Self {
        let mut raw: HashMap<PhoneId, Vec<Entry>> = HashMap::new();
        let mut pairs: HashMap<(PhoneId, PhoneId), Vec<usize>> = HashMap::new();
        for (i, r) in records.iter().enumerate() {
            let (caller, callee) = (r.caller(), r.callee());
            raw.entry(caller).or_default().push(Entry {
                rec_idx: i,
                was_caller: true,
                counterpart: callee,
            });
            raw.entry(callee).or_default().push(Entry {
                rec_idx: i,
                was_caller: false,
                counterpart: caller,
            });
            pairs.entry(pair_key(caller, callee)).or_default().push(i);
        }
        let phones = raw
            .into_iter()
            .map(|(phone, entries)| {
                let mut outs = vec![0u32];
                let mut ins = vec![0u32];
                let mut outdegree = vec![0u32];
                let mut indegree = vec![0u32];
                let mut out_seen: HashSet<PhoneId> = HashSet::new();
                let mut in_seen: HashSet<PhoneId> = HashSet::new();
                for e in &entries {
                    if e.was_caller {
                        out_seen.insert(e.counterpart);
                    } else {
                        in_seen.insert(e.counterpart);
                    }
                    outs.push(outs.last().unwrap() + e.was_caller as u32);
                    ins.push(ins.last().unwrap() + !e.was_caller as u32);
                    outdegree.push(out_seen.len() as u32);
                    indegree.push(in_seen.len() as u32);
                }
                (phone, PhoneLog { entries, outs, ins, outdegree, indegree })
            })
            .collect();
        OracleIndex { records, phones, pairs }
    }

    /// (outs, ins, outdegree, indegree) of `phone` over records before
    /// index `before`.
    pub fn snapshot(&self, phone: PhoneId, before: usize) -> (u32, u32, u32, u32) {
        match self.phones.get(&phone) {
            None => (0, 0, 0, 0),
            Some(log) => {
                let k = log.entries.partition_point(|e| e.rec_idx < before);
                (log.outs[k], log.ins[k], log.outdegree[k], log.indegree[k])
            }
        }
    }

    pub fn pair_count(&self, a: PhoneId, b: PhoneId, before: usize) -> u32 {
        match self.pairs.get(&pair_key(a, b)) {
            None => 0,
            Some(list) => list.partition_point(|&i| i < before) as u32,
        }
    }

    /// Whether the caller of record `rec_idx` called or was called by the
    /// same counterpart in their immediately preceding record.
    pub fn is_redial(&self, rec_idx: usize) -> bool {
        let r = &self.records[rec_idx];
        let log = &self.phones[&r.caller()];
        let pos = log.entries.partition_point(|e| e.rec_idx < rec_idx);
        pos > 0 && log.entries[pos - 1].counterpart == r.callee()
    }

    /// Recomputes the instance for the qualifying record at `idx`.
    pub fn extract(&self, idx: usize, params: FeatureParams) -> RawFeatures {
        let record = &self.records[idx];
        let caller = record.caller();
        let callee = record.callee();
        let tz = params.tz_offset_secs;

        let (c_outs, c_ins, c_outdeg, c_indeg) = self.snapshot(caller, idx);
        let (e_outs, e_ins, e_outdeg, e_indeg) = self.snapshot(callee, idx);

        let mut raw = RawFeatures {
            is_in_contact: record.call_contact,
            weekday: timeutil::weekday(record.call_date, tz),
            hour: timeutil::hour(record.call_date, tz),
            same_location: record.same_location(),
            caller_outs: c_outs,
            caller_ins: c_ins,
            caller_outdegree: c_outdeg,
            caller_indegree: c_indeg,
            callee_outs: e_outs,
            callee_ins: e_ins,
            callee_outdegree: e_outdeg,
            callee_indegree: e_indeg,
            n_call: self.pair_count(caller, callee, idx) + 1,
            hist: HistoricMeans::default(),
            history_len: 0,
        };

        let owner_log = &self.phones[&caller];
        let upto = owner_log.entries.partition_point(|e| e.rec_idx < idx);
        let start = upto.saturating_sub(params.history_cap);
        let rows = &owner_log.entries[start..upto];
        if rows.is_empty() {
            return raw;
        }

        let n = rows.len() as f64;
        let mut sum = HistoricMeans::default();
        for (offset, entry) in rows.iter().enumerate() {
            let h = &self.records[entry.rec_idx];
            let (hc, he) = (h.caller(), h.callee());
            let (a, b, c, d) = self.snapshot(hc, entry.rec_idx);
            let (e, f, g, k) = self.snapshot(he, entry.rec_idx);
            sum.is_in_contact += h.call_contact as u8 as f64;
            sum.call_type += entry.was_caller as u8 as f64;
            sum.duration += h.call_duration as f64;
            sum.weekday += timeutil::weekday(h.call_date, tz) as f64;
            sum.hour += timeutil::hour(h.call_date, tz) as f64;
            sum.same_location += h.same_location() as u8 as f64;
            sum.caller_outs += a as f64;
            sum.caller_ins += b as f64;
            sum.caller_outdegree += c as f64;
            sum.caller_indegree += d as f64;
            sum.callee_outs += e as f64;
            sum.callee_ins += f as f64;
            sum.callee_outdegree += g as f64;
            sum.callee_indegree += k as f64;
            sum.is_redial += self.is_redial(entry.rec_idx) as u8 as f64;
            let next_date = if start + offset + 1 < upto {
                self.records[owner_log.entries[start + offset + 1].rec_idx].call_date
            } else {
                record.call_date
            };
            sum.gap_to_next += (next_date - h.call_date) as f64;
        }
        raw.hist = HistoricMeans {
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
        raw.history_len = rows.len() as u32;
        raw
    }
}

/// O(pos x neg) AUC comparison oracle: wins count 1, ties count half.
pub fn pairwise_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let pos: Vec<f64> =
        scores.iter().zip(labels).filter(|(_, &l)| l).map(|(s, _)| *s).collect();
    let neg: Vec<f64> =
        scores.iter().zip(labels).filter(|(_, &l)| !l).map(|(s, _)| *s).collect();
    let mut sum = 0.0;
    for &p in &pos {
        for &n in &neg {
            if p > n {
                sum += 1.0;
            } else if p == n {
                sum += 0.5;
            }
        }
    }
    sum / (pos.len() as f64 * neg.len() as f64)
}

fn gradcheck_rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

fn gradcheck_batch(
    rng: &mut rand_chacha::ChaCha8Rng,
    rows: usize,
    cols: usize,
) -> (Vec<Vec<f64>>, Vec<bool>) {
    use rand::Rng;
    let data: Vec<Vec<f64>> =
        (0..rows).map(|_| (0..cols).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
    let labels: Vec<bool> = (0..rows).map(|i| i % 2 == 0).collect();
    (data, labels)
}

/// Worst relative error between the analytic logistic-loss gradient and
/// central finite differences over `probes` random points.
pub fn max_logistic_gradcheck_err(probes: usize, seed: u64) -> f64 {
    use callwarden_core::models::logistic_loss_grad;
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-6;
    let mut worst = 0.0f64;
    for probe in 0..probes {
        let cols = rng.gen_range(2..8);
        let n_rows = rng.gen_range(5..30);
        let (rows, labels) = gradcheck_batch(&mut rng, n_rows, cols);
        let l2 = [0.0, 0.01, 0.5][probe % 3];
        let weights: Vec<f64> = (0..cols).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let bias: f64 = rng.gen_range(-1.0..1.0);
        let (_, grad_w, grad_b) = logistic_loss_grad(&rows, &labels, &weights, bias, l2);
        for i in 0..cols {
            let mut plus = weights.clone();
            let mut minus = weights.clone();
            plus[i] += h;
            minus[i] -= h;
            let (lp, _, _) = logistic_loss_grad(&rows, &labels, &plus, bias, l2);
            let (lm, _, _) = logistic_loss_grad(&rows, &labels, &minus, bias, l2);
            worst = worst.max(gradcheck_rel_err(grad_w[i], (lp - lm) / (2.0 * h)));
        }
        let (lp, _, _) = logistic_loss_grad(&rows, &labels, &weights, bias + h, l2);
        let (lm, _, _) = logistic_loss_grad(&rows, &labels, &weights, bias - h, l2);
        worst = worst.max(gradcheck_rel_err(grad_b, (lp - lm) / (2.0 * h)));
    }
    worst
}

/// Worst relative error between MLP backprop and central finite
/// differences over `probes` random (input, parameter) draws.
pub fn max_mlp_gradcheck_err(probes: usize, seed: u64) -> f64 {
    use callwarden_core::models::{mlp_loss_grad, MlpParams};
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..probes {
        let inputs = rng.gen_range(2..6);
        let hidden = rng.gen_range(2..6);
        let n_rows = rng.gen_range(4..16);
        let (rows, labels) = gradcheck_batch(&mut rng, n_rows, inputs);
        let mut flat: Vec<f64> = (0..hidden * inputs + hidden + 2 * hidden + 2)
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let params = MlpParams::from_flat(inputs, hidden, &flat);
        let (_, grads) = mlp_loss_grad(&params, &rows, &labels);
        let grad_flat = grads.to_flat();
        for i in 0..flat.len() {
            let orig = flat[i];
            flat[i] = orig + h;
            let (lp, _) =
                mlp_loss_grad(&MlpParams::from_flat(inputs, hidden, &flat), &rows, &labels);
            flat[i] = orig - h;
            let (lm, _) =
                mlp_loss_grad(&MlpParams::from_flat(inputs, hidden, &flat), &rows, &labels);
            flat[i] = orig;
            worst = worst.max(gradcheck_rel_err(grad_flat[i], (lp - lm) / (2.0 * h)));
        }
    }
    worst
}

fn close(a: f64, b: f64) -> bool {
    let scale = a.abs().max(b.abs()).max(1.0);
    (a - b).abs() <= 1e-9 * scale
}

/// Exact on counts and booleans, 1e-9 relative on historic means.
pub fn assert_raw_features_match(streamed: &RawFeatures, oracle: &RawFeatures, context: &str) {
    assert_eq!(streamed.is_in_contact, oracle.is_in_contact, "{context}: is_in_contact");
    assert_eq!(streamed.weekday, oracle.weekday, "{context}: weekday");
    assert_eq!(streamed.hour, oracle.hour, "{context}: hour");
    assert_eq!(streamed.same_location, oracle.same_location, "{context}: same_location");
    assert_eq!(streamed.caller_outs, oracle.caller_outs, "{context}: caller_outs");
    assert_eq!(streamed.caller_ins, oracle.caller_ins, "{context}: caller_ins");
    assert_eq!(streamed.caller_outdegree, oracle.caller_outdegree, "{context}: caller_outdegree");
    assert_eq!(streamed.caller_indegree, oracle.caller_indegree, "{context}: caller_indegree");
    assert_eq!(streamed.callee_outs, oracle.callee_outs, "{context}: callee_outs");
    assert_eq!(streamed.callee_ins, oracle.callee_ins, "{context}: callee_ins");
    assert_eq!(streamed.callee_outdegree, oracle.callee_outdegree, "{context}: callee_outdegree");
    assert_eq!(streamed.callee_indegree, oracle.callee_indegree, "{context}: callee_indegree");
    assert_eq!(streamed.n_call, oracle.n_call, "{context}: n_call");
    assert_eq!(streamed.history_len, oracle.history_len, "{context}: history_len");
    let s = streamed.hist.as_array();
    let o = oracle.hist.as_array();
    for (i, (a, b)) in s.iter().zip(&o).enumerate() {
        assert!(close(*a, *b), "{context}: historic mean {i} differs: {a} vs {b}");
    }
}
