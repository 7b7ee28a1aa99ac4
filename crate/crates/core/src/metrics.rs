//! ROC/AUC and the early-detection metrics.
//!
//! A model emits a score per call; it predicts malicious when the score
//! is at or above a threshold tau. `tau_of_p` picks the smallest tau
//! that lets at least fraction `p` of benign calls pass. `fp_at` is the
//! index of the first call of a malicious number flagged at that tau,
//! capped at `M + 1`; `afp` averages it over numbers, `mr_at` is the
//! fraction of numbers caught within their first `n` calls, and
//! `reduction_rate` converts an AFP into the share of blacklist-passed
//! malicious calls eliminated.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("need at least one example of each class")]
    SingleClass,
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
}

/// JSON has no infinity literal; thresholds of +inf ("flag nothing",
/// the top of a ROC sweep) serialize as null.
mod tau_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() { s.serialize_some(v) } else { s.serialize_none() }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }

    pub mod vec {
        use serde::{Deserialize, Deserializer, Serializer};

        pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
            s.collect_seq(v.iter().map(|x| if x.is_finite() { Some(*x) } else { None }))
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
            Ok(Vec::<Option<f64>>::deserialize(d)?
                .into_iter()
                .map(|x| x.unwrap_or(f64::INFINITY))
                .collect())
        }
    }
}

/// One ROC operating point; the curve runs from (0,0) to (1,1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    #[serde(with = "tau_serde")]
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
}

impl RocCurve {
    pub fn write_csv(&self, mut out: impl std::io::Write) -> std::io::Result<()> {
        writeln!(out, "fpr,tpr,threshold")?;
        for p in &self.points {
            writeln!(out, "{},{},{}", p.fpr, p.tpr, p.threshold)?;
        }
        Ok(())
    }
}

/// Rank-statistic AUC with ties counted one half, plus the ROC curve
/// swept over the distinct scores.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<(RocCurve, f64), MetricError> {
    assert_eq!(scores.len(), labels.len(), "scores and labels must align");
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricError::SingleClass);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Average ranks across tie groups; sum the positives' ranks.
    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1 ..= j average to (i + j + 1) / 2.
        let avg_rank = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            if labels[k] {
                rank_sum_pos += avg_rank;
            }
        }
        i = j;
    }
    let u = rank_sum_pos - (n_pos as f64) * (n_pos as f64 + 1.0) / 2.0;
    let auc = u / (n_pos as f64 * n_neg as f64);

    // Sweep thresholds from high to low over distinct scores.
    let mut points = vec![RocPoint { fpr: 0.0, tpr: 0.0, threshold: f64::INFINITY }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut k = order.len();
    while k > 0 {
        let threshold = scores[order[k - 1]];
        while k > 0 && scores[order[k - 1]] == threshold {
            if labels[order[k - 1]] {
                tp += 1;
            } else {
                fp += 1;
            }
            k -= 1;
        }
        points.push(RocPoint {
            fpr: fp as f64 / n_neg as f64,
            tpr: tp as f64 / n_pos as f64,
            threshold,
        });
    }
    Ok((RocCurve { points }, auc))
}

/// Smallest candidate threshold (a distinct score or +inf) whose benign
/// pass rate `|{s < tau}| / N` is at least `p`. Accepts `p = 0`, where
/// any pass rate suffices and the smallest score wins.
pub fn tau_of_p(benign_scores: &[f64], p: f64) -> Result<f64, MetricError> {
    if benign_scores.is_empty() {
        return Err(MetricError::EmptyInput("benign scores"));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(MetricError::InvalidParam(format!("p = {p} outside [0, 1]")));
    }
    let mut sorted = benign_scores.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len();
    let need = {
        let t = p * n as f64;
        // Guard the ceil against float drift on exact multiples.
        let r = t.round();
        let need = if (t - r).abs() < 1e-9 * (n as f64).max(1.0) { r } else { t.ceil() };
        (need as usize).min(n)
    };
    if need == 0 {
        return Ok(sorted[0]);
    }
    let cut = sorted[need - 1];
    for &s in &sorted[need..] {
        if s > cut {
            return Ok(s);
        }
    }
    Ok(f64::INFINITY)
}

/// Index (1-based) of the first of a number's calls scoring at or above
/// `tau`, capped at `m + 1`.
pub fn fp_at(scores: &[f64], tau: f64, m: u32) -> Result<u32, MetricError> {
    if scores.is_empty() {
        return Err(MetricError::EmptyInput("per-number scores"));
    }
    if m == 0 {
        return Err(MetricError::InvalidParam("label threshold m must be >= 1".into()));
    }
    for (i, &s) in scores.iter().take(m as usize).enumerate() {
        if s >= tau {
            return Ok(i as u32 + 1);
        }
    }
    Ok(m + 1)
}

/// Mean first prediction over a set of malicious numbers.
pub fn afp(numbers: &[Vec<f64>], tau: f64, m: u32) -> Result<f64, MetricError> {
    if numbers.is_empty() {
        return Err(MetricError::EmptyInput("malicious numbers"));
    }
    let mut sum = 0.0;
    for scores in numbers {
        sum += fp_at(scores, tau, m)? as f64;
    }
    Ok(sum / numbers.len() as f64)
}

/// Fraction of malicious numbers flagged within their first `n` calls.
pub fn mr_at(numbers: &[Vec<f64>], tau: f64, n: u32) -> Result<f64, MetricError> {
    if numbers.is_empty() {
        return Err(MetricError::EmptyInput("malicious numbers"));
    }
    if n == 0 {
        return Err(MetricError::InvalidParam("n must be >= 1".into()));
    }
    let mut caught = 0usize;
    for scores in numbers {
        if fp_at(scores, tau, n)? <= n {
            caught += 1;
        }
    }
    Ok(caught as f64 / numbers.len() as f64)
}

/// Share of blacklist-unblocked malicious calls a model eliminates:
/// `1 - (afp - 1) / m`.
pub fn reduction_rate(afp: f64, m: u32) -> Result<f64, MetricError> {
    if m == 0 {
        return Err(MetricError::InvalidParam("label threshold m must be >= 1".into()));
    }
    if !(1.0 - 1e-9..=m as f64 + 1.0 + 1e-9).contains(&afp) {
        return Err(MetricError::InvalidParam(format!("afp = {afp} outside [1, {}]", m + 1)));
    }
    Ok(1.0 - (afp - 1.0) / m as f64)
}

/// Evaluation knobs: label thresholds M, the benign pass-rate target p,
/// the MR curve range, and the benign calibration split.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub m_values: Vec<u32>,
    pub p: f64,
    pub mr_max_n: u32,
    /// Share of benign evaluation records held out to calibrate tau.
    pub calib_fraction: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { m_values: vec![10, 20, 30], p: 0.99, mr_max_n: 30, calib_fraction: 0.2 }
    }
}

/// Per-M early-detection numbers for one model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AfpEntry {
    pub m: u32,
    pub afp: f64,
    pub baseline_afp: f64,
    pub reduction: f64,
    pub baseline_reduction: f64,
}

/// Everything measured for one model in one experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub auc: f64,
    pub auc_runs: Vec<f64>,
    #[serde(with = "tau_serde")]
    pub tau: f64,
    #[serde(with = "tau_serde::vec")]
    pub tau_runs: Vec<f64>,
    pub afp: Vec<AfpEntry>,
    /// `(n, MR@(n,p))` averaged over resamples.
    pub mr_curve: Vec<(u32, f64)>,
    /// ROC curve over the first resample's balanced test set.
    pub roc: RocCurve,
    /// Achieved pass rate on the held-out benign evaluation records.
    pub benign_pass_rate: f64,
    pub benign_eval_records: usize,
    pub benign_calib_records: usize,
    pub malicious_numbers: usize,
    pub train_rows: usize,
    pub train_positives: usize,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auc_is_one_when_separated_and_half_when_tied() {
        let (_, auc) = roc_auc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]).unwrap();
        assert_eq!(auc, 1.0);
        let (_, auc) = roc_auc(&[0.5, 0.5, 0.5, 0.5], &[false, true, false, true]).unwrap();
        assert_eq!(auc, 0.5);
    }

    #[test]
    fn auc_matches_hand_computed_pairwise_value() {
        // Positives {0.35, 0.8} vs negatives {0.1, 0.4}: three of four
        // pairs rank correctly.
        let (_, auc) = roc_auc(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]).unwrap();
        assert_eq!(auc, 0.75);
    }

    #[test]
    fn auc_rejects_single_class() {
        assert!(matches!(roc_auc(&[0.1, 0.2], &[true, true]), Err(MetricError::SingleClass)));
    }

    #[test]
    fn roc_curve_spans_origin_to_one_one() {
        let (curve, _) = roc_auc(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]).unwrap();
        let first = curve.points.first().unwrap();
        let last = curve.points.last().unwrap();
        assert_eq!((first.fpr, first.tpr), (0.0, 0.0));
        assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
        for w in curve.points.windows(2) {
            assert!(w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr);
        }
    }

    #[test]
    fn tau_examples() {
        // Three of four benign calls must pass.
        assert_eq!(tau_of_p(&[0.1, 0.2, 0.3, 0.9], 0.75).unwrap(), 0.9);
        // All must pass and 0.3 must stay below tau: no finite candidate.
        assert_eq!(tau_of_p(&[0.1, 0.2, 0.3], 1.0).unwrap(), f64::INFINITY);
        // Pass rate zero suffices: the smallest distinct score.
        assert_eq!(tau_of_p(&[0.3, 0.1, 0.2], 0.0).unwrap(), 0.1);
    }

    #[test]
    fn tau_respects_ties() {
        // tau = 0.5 passes nothing here, so only +inf satisfies p = 0.5.
        assert_eq!(tau_of_p(&[0.5, 0.5], 0.5).unwrap(), f64::INFINITY);
        // 0.9 lets both 0.2s pass.
        assert_eq!(tau_of_p(&[0.2, 0.2, 0.9], 0.5).unwrap(), 0.9);
    }

    #[test]
    fn fp_at_boundaries() {
        assert_eq!(fp_at(&[1.0, 1.0], 0.5, 10).unwrap(), 1);
        assert_eq!(fp_at(&[0.0; 4], 0.5, 10).unwrap(), 11);
        assert_eq!(fp_at(&[0.1, 0.2, 0.9, 0.95], 0.5, 10).unwrap(), 3);
        // Firing on equality.
        assert_eq!(fp_at(&[0.5], 0.5, 10).unwrap(), 1);
        // A never-firing number is capped at m + 1 even with fewer records.
        assert_eq!(fp_at(&[0.0, 0.0], 0.5, 10).unwrap(), 11);
        assert!(fp_at(&[], 0.5, 10).is_err());
    }

    #[test]
    fn afp_averages_fp_values() {
        assert_eq!(afp(&[vec![0.9, 0.1, 0.95]], 0.5, 10).unwrap(), 1.0);
        // fp values 1 and m + 1 average to (m + 2) / 2.
        let numbers = vec![vec![0.9], vec![0.0]];
        assert_eq!(afp(&numbers, 0.5, 10).unwrap(), 6.0);
    }

    #[test]
    fn mr_boundaries_and_consistency_with_fp() {
        let numbers = vec![vec![0.9, 0.0], vec![0.0, 0.9], vec![0.0, 0.0]];
        assert_eq!(mr_at(&numbers, 0.5, 1).unwrap(), 1.0 / 3.0);
        assert_eq!(mr_at(&numbers, 0.5, 2).unwrap(), 2.0 / 3.0);
        // Non-decreasing in n.
        let mut last = 0.0;
        for n in 1..6 {
            let v = mr_at(&numbers, 0.5, n).unwrap();
            assert!(v >= last);
            last = v;
        }
        // Cross-check against the fp formulation.
        for n in 1..6u32 {
            let direct = mr_at(&numbers, 0.5, n).unwrap();
            let via_fp = numbers.iter().filter(|s| fp_at(s, 0.5, n).unwrap() <= n).count()
                as f64
                / numbers.len() as f64;
            assert_eq!(direct, via_fp);
        }
    }

    #[test]
    fn reduction_rate_formula() {
        assert_eq!(reduction_rate(1.0, 10).unwrap(), 1.0);
        assert_eq!(reduction_rate(11.0, 10).unwrap(), 0.0);
        // AFP 3.90 at M = 30 reduces unblocked calls by 90.33%.
        let r = reduction_rate(3.90, 30).unwrap();
        assert!((r - 0.903333333333333).abs() < 1e-12);
        assert_eq!((r * 1e4).round() / 1e4, 0.9033);
        assert!(reduction_rate(0.5, 10).is_err());
        assert!(reduction_rate(11.5, 10).is_err());
    }
}
