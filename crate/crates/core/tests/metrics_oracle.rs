//! Rank-statistic AUC against the exhaustive pairwise oracle, plus
//! threshold-calibration and first-prediction properties.

mod common;

use common::pairwise_auc;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use callwarden_core::metrics::{afp, fp_at, mr_at, roc_auc, tau_of_p};

#[test]
fn rank_auc_equals_pairwise_oracle_on_random_sets() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for case in 0..1000 {
        let n = rng.gen_range(2..=500);
        let n_pos = rng.gen_range(1..n);
        let mut scores = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        // Coarse score grid so ties actually happen.
        let grid = rng.gen_range(2..40);
        for i in 0..n {
            scores.push(rng.gen_range(0..grid) as f64 / grid as f64);
            labels.push(i < n_pos);
        }
        let (_, fast) = roc_auc(&scores, &labels).unwrap();
        let slow = pairwise_auc(&scores, &labels);
        assert_eq!(fast, slow, "case {case}: rank {fast} != pairwise {slow}");
    }
}

#[test]
fn rank_auc_equals_pairwise_oracle_up_to_two_thousand_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..40 {
        let n = rng.gen_range(500..=2000);
        let n_pos = rng.gen_range(1..n);
        let grid = rng.gen_range(2..100);
        let mut scores = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            scores.push(rng.gen_range(0..grid) as f64 / grid as f64);
            labels.push(i < n_pos);
        }
        let (_, fast) = roc_auc(&scores, &labels).unwrap();
        assert_eq!(fast, pairwise_auc(&scores, &labels));
    }
}

#[test]
fn auc_area_under_curve_agrees_with_rank_statistic() {
    // Trapezoidal area under the swept ROC curve must reproduce the
    // rank AUC up to float error.
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..50 {
        let n = rng.gen_range(10..200);
        let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0..20) as f64 / 20.0).collect();
        let labels: Vec<bool> = (0..n).map(|i| i % 3 == 0).collect();
        let (curve, auc) = roc_auc(&scores, &labels).unwrap();
        let mut area = 0.0;
        for w in curve.points.windows(2) {
            area += (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0;
        }
        assert!((area - auc).abs() < 1e-12, "area {area} vs auc {auc}");
    }
}

proptest! {
    #[test]
    fn auc_is_invariant_under_increasing_transforms(
        mut scores in proptest::collection::vec(0u8..50, 4..120),
        flip in proptest::collection::vec(any::<bool>(), 4..120),
    ) {
        let labels: Vec<bool> = scores
            .iter()
            .zip(flip.iter().cycle())
            .map(|(s, f)| (*s as usize + *f as usize).is_multiple_of(2))
            .collect();
        prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
        scores.truncate(labels.len());
        let raw: Vec<f64> = scores.iter().map(|&s| s as f64 / 10.0).collect();
        let transformed: Vec<f64> = raw.iter().map(|s| 2.0 * s + 1.0).collect();
        let (_, a) = roc_auc(&raw, &labels).unwrap();
        let (_, b) = roc_auc(&transformed, &labels).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn tau_is_minimal_and_feasible(
        scores in proptest::collection::vec(0u8..30, 1..200),
        p_milli in 0u64..=1000,
    ) {
        let benign: Vec<f64> = scores.iter().map(|&s| s as f64 / 7.0).collect();
        let p = p_milli as f64 / 1000.0;
        let tau = tau_of_p(&benign, p).unwrap();
        // Exact integer form of "pass rate >= p": at least
        // ceil(p_milli * n / 1000) of the n scores must sit below tau.
        let n = benign.len() as u64;
        let need = (p_milli * n).div_ceil(1000);
        let count_below = |t: f64| benign.iter().filter(|&&s| s < t).count() as u64;
        // Feasible at the returned threshold (+inf passes everything).
        prop_assert!(count_below(tau) >= need);
        // Minimal among candidates: every smaller distinct score fails.
        for &s in &benign {
            if s < tau {
                prop_assert!(count_below(s) < need, "candidate {s} also feasible");
            }
        }
    }

    #[test]
    fn fp_transform_invariance_and_mr_consistency(
        per_number in proptest::collection::vec(
            proptest::collection::vec(0u8..20, 1..15),
            1..12,
        ),
        tau_grid in 0u8..20,
        m in 1u32..12,
    ) {
        let numbers: Vec<Vec<f64>> = per_number
            .iter()
            .map(|v| v.iter().map(|&s| s as f64 / 19.0).collect())
            .collect();
        let tau = tau_grid as f64 / 19.0;
        // Applying the same increasing transform to scores and tau
        // leaves every fp outcome unchanged.
        for scores in &numbers {
            let a = fp_at(scores, tau, m).unwrap();
            let t: Vec<f64> = scores.iter().map(|s| 2.0 * s + 1.0).collect();
            let b = fp_at(&t, 2.0 * tau + 1.0, m).unwrap();
            prop_assert_eq!(a, b);
        }
        // afp equals the mean of independently recomputed fp values.
        let mean = numbers
            .iter()
            .map(|s| fp_at(s, tau, m).unwrap() as f64)
            .sum::<f64>() / numbers.len() as f64;
        prop_assert_eq!(afp(&numbers, tau, m).unwrap(), mean);
        // mr at n equals the share of numbers with fp <= n.
        for n in 1..=m {
            let direct = mr_at(&numbers, tau, n).unwrap();
            let share = numbers.iter().filter(|s| fp_at(s, tau, n).unwrap() <= n).count() as f64
                / numbers.len() as f64;
            prop_assert_eq!(direct, share);
        }
    }
}
