//! Binary-classification evaluation: confusion counts, derived metrics with
//! explicit 0/0 → 0 conventions, and tie-aware ROC AUC.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Confusion-matrix counts for a binary task; `true` is the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub true_negative: u64,
    pub false_positive: u64,
    pub false_negative: u64,
    pub true_positive: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.true_negative + self.false_positive + self.false_negative + self.true_positive
    }
}

/// Derived metrics, all in [0, 1]. `auc` is present only when probability
/// scores were available.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub auc: Option<f64>,
}

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("prediction/truth length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("cannot compute metrics from all-zero counts")]
    EmptyCounts,
    #[error("AUC requires both classes to be present")]
    SingleClass,
}

/// Tallies confusion counts from parallel prediction/truth label sequences.
pub fn confusion(predictions: &[bool], truths: &[bool]) -> Result<ConfusionCounts, MetricsError> {
    if predictions.len() != truths.len() {
        return Err(MetricsError::LengthMismatch {
            left: predictions.len(),
            right: truths.len(),
        });
    }
    let mut c = ConfusionCounts {
        true_negative: 0,
        false_positive: 0,
        false_negative: 0,
        true_positive: 0,
    };
    for (&p, &t) in predictions.iter().zip(truths) {
        match (p, t) {
            (false, false) => c.true_negative += 1,
            (true, false) => c.false_positive += 1,
            (false, true) => c.false_negative += 1,
            (true, true) => c.true_positive += 1,
        }
    }
    Ok(c)
}

/// Computes accuracy, precision, recall, and F1 from confusion counts.
/// Undefined ratios (zero denominators) evaluate to 0 by convention, so a
/// model that never predicts the positive class reports precision = recall
/// = F1 = 0 rather than an error.
pub fn report(c: &ConfusionCounts) -> Result<EvalReport, MetricsError> {
    let total = c.total();
    if total == 0 {
        return Err(MetricsError::EmptyCounts);
    }
    let (tn, fp, fn_, tp) = (
        c.true_negative as f64,
        c.false_positive as f64,
        c.false_negative as f64,
        c.true_positive as f64,
    );
    let accuracy = (tn + tp) / total as f64;
    let precision = if tp + fp == 0.0 { 0.0 } else { tp / (tp + fp) };
    let recall = if tp + fn_ == 0.0 { 0.0 } else { tp / (tp + fn_) };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(EvalReport {
        accuracy,
        precision,
        recall,
        f1,
        auc: None,
    })
}

/// Rank-statistic ROC AUC with midrank tie handling:
/// `(Σ ranks of positives − n_pos(n_pos+1)/2) / (n_pos·n_neg)`.
/// Equals exhaustive-threshold trapezoidal ROC integration.
pub fn auc(scores: &[f64], truths: &[bool]) -> Result<f64, MetricsError> {
    if scores.len() != truths.len() {
        return Err(MetricsError::LengthMismatch {
            left: scores.len(),
            right: truths.len(),
        });
    }
    let n_pos = truths.iter().filter(|&&t| t).count();
    let n_neg = truths.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricsError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());
    // Midranks: tied scores share the average of their 1-based rank range.
    let mut ranks = vec![0.0f64; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            ranks[idx] = midrank;
        }
        i = j + 1;
    }
    let rank_sum: f64 = truths
        .iter()
        .zip(&ranks)
        .filter(|(&t, _)| t)
        .map(|(_, &r)| r)
        .sum();
    let n_pos_f = n_pos as f64;
    Ok((rank_sum - n_pos_f * (n_pos_f + 1.0) / 2.0) / (n_pos_f * n_neg as f64))
}

/// Renders reports as an aligned text table, one row per named result.
pub fn render_table(rows: &[(String, ConfusionCounts, EvalReport)]) -> String {
    let mut out = String::from(
        "Model         Accuracy Precision Recall F1     AUC    TN    FP    FN    TP\n",
    );
    for (name, c, r) in rows {
        let auc_txt = match r.auc {
            Some(a) => format!("{a:.2}"),
            None => "-".to_string(),
        };
        out.push_str(&format!(
            "{:<13} {:<8.2} {:<9.2} {:<6.2} {:<6.2} {:<6} {:<5} {:<5} {:<5} {:<5}\n",
            name,
            r.accuracy,
            r.precision,
            r.recall,
            r.f1,
            auc_txt,
            c.true_negative,
            c.false_positive,
            c.false_negative,
            c.true_positive,
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{coin, rng_from_seed, uniform01};
    use proptest::prelude::*;

    fn counts(tn: u64, fp: u64, fn_: u64, tp: u64) -> ConfusionCounts {
        ConfusionCounts {
            true_negative: tn,
            false_positive: fp,
            false_negative: fn_,
            true_positive: tp,
        }
    }

    /// Exhaustive-threshold ROC oracle: enumerate every distinct score as a
    /// threshold (predict positive when score >= threshold), collect
    /// (FPR, TPR) points from (0,0) to (1,1), and integrate by trapezoid.
    fn roc_trapezoid_auc(scores: &[f64], truths: &[bool]) -> f64 {
        let n_pos = truths.iter().filter(|&&t| t).count() as f64;
        let n_neg = truths.len() as f64 - n_pos;
        let mut thresholds: Vec<f64> = scores.to_vec();
        thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
        thresholds.dedup();
        let mut points = vec![(0.0f64, 0.0f64)];
        for &t in &thresholds {
            let mut tp = 0.0;
            let mut fp = 0.0;
            for (&s, &truth) in scores.iter().zip(truths) {
                if s >= t {
                    if truth {
                        tp += 1.0;
                    } else {
                        fp += 1.0;
                    }
                }
            }
            points.push((fp / n_neg, tp / n_pos));
        }
        points
            .windows(2)
            .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
            .sum()
    }

    // --- confusion ---------------------------------------------------------

    #[test]
    fn perfect_predictions() {
        let truths: Vec<bool> = (0..20).map(|i| i < 10).collect();
        let c = confusion(&truths, &truths).unwrap();
        assert_eq!(c, counts(10, 0, 0, 10));
    }

    #[test]
    fn all_false_positives() {
        let c = confusion(&[true; 5], &[false; 5]).unwrap();
        assert_eq!(c, counts(0, 5, 0, 0));
    }

    #[test]
    fn random_pairs_match_tally_oracle() {
        let mut rng = rng_from_seed(3);
        let preds: Vec<bool> = (0..1000).map(|_| coin(&mut rng)).collect();
        let truths: Vec<bool> = (0..1000).map(|_| coin(&mut rng)).collect();
        let c = confusion(&preds, &truths).unwrap();
        let pair = |p: bool, t: bool| {
            preds
                .iter()
                .zip(&truths)
                .filter(|(&a, &b)| a == p && b == t)
                .count() as u64
        };
        assert_eq!(c.true_negative, pair(false, false));
        assert_eq!(c.false_positive, pair(true, false));
        assert_eq!(c.false_negative, pair(false, true));
        assert_eq!(c.true_positive, pair(true, true));
        assert_eq!(c.total(), 1000);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        assert!(matches!(
            confusion(&[true], &[true, false]),
            Err(MetricsError::LengthMismatch { left: 1, right: 2 })
        ));
    }

    // --- report -------------------------------------------------------------

    #[test]
    fn report_matches_published_survey_row() {
        let r = report(&counts(120, 4, 2, 74)).unwrap();
        assert!((r.accuracy - 0.97).abs() < 0.005);
        assert!((r.precision - 0.95).abs() < 0.005);
        assert!((r.recall - 0.97).abs() < 0.005);
        assert!((r.f1 - 0.96).abs() < 0.005);
    }

    #[test]
    fn report_matches_always_positive_classifier_row() {
        let r = report(&counts(2, 42, 0, 46)).unwrap();
        assert!((r.accuracy - 0.53).abs() < 0.005);
        assert!((r.precision - 0.52).abs() < 0.005);
        assert!((r.recall - 1.00).abs() < 0.005);
        assert!((r.f1 - 0.69).abs() < 0.005);
    }

    #[test]
    fn report_zero_conventions_for_never_positive_classifier() {
        let r = report(&counts(35, 0, 17, 0)).unwrap();
        assert_eq!(r.precision, 0.0);
        assert_eq!(r.recall, 0.0);
        assert_eq!(r.f1, 0.0);
        assert!((r.accuracy - 0.67).abs() < 0.005);
    }

    #[test]
    fn empty_counts_is_an_error() {
        assert!(matches!(
            report(&counts(0, 0, 0, 0)),
            Err(MetricsError::EmptyCounts)
        ));
    }

    // --- auc ------------------------------------------------------------------

    #[test]
    fn perfectly_separated_scores_give_unit_auc() {
        let scores = [0.1, 0.2, 0.3, 0.8, 0.9];
        let truths = [false, false, false, true, true];
        assert_eq!(auc(&scores, &truths).unwrap(), 1.0);
    }

    #[test]
    fn all_tied_scores_give_half_auc() {
        let scores = [0.5; 10];
        let truths: Vec<bool> = (0..10).map(|i| i % 2 == 0).collect();
        assert_eq!(auc(&scores, &truths).unwrap(), 0.5);
    }

    #[test]
    fn rank_statistic_matches_threshold_oracle() {
        for seed in 0..20u64 {
            let mut rng = rng_from_seed(seed);
            let n = 50;
            // Quantized scores force ties to exercise the midrank path.
            let scores: Vec<f64> = (0..n)
                .map(|_| (uniform01(&mut rng) * 10.0).floor() / 10.0)
                .collect();
            let mut truths: Vec<bool> = (0..n).map(|_| coin(&mut rng)).collect();
            truths[0] = true;
            truths[1] = false;
            let got = auc(&scores, &truths).unwrap();
            let want = roc_trapezoid_auc(&scores, &truths);
            assert!(
                (got - want).abs() < 1e-12,
                "seed {seed}: rank {got} vs trapezoid {want}"
            );
        }
    }

    #[test]
    fn single_class_is_an_error() {
        assert!(matches!(
            auc(&[0.1, 0.9], &[true, true]),
            Err(MetricsError::SingleClass)
        ));
        assert!(matches!(
            auc(&[0.1, 0.9], &[false, false]),
            Err(MetricsError::SingleClass)
        ));
    }

    #[test]
    fn render_table_is_aligned_and_complete() {
        let c = counts(120, 4, 2, 74);
        let mut r = report(&c).unwrap();
        r.auc = Some(0.93);
        let txt = render_table(&[("gaia".to_string(), c, r)]);
        let lines: Vec<&str> = txt.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[0].starts_with("Model"));
        assert!(lines[1].contains("gaia"));
        assert!(lines[1].contains("120"));
        assert!(lines[1].contains("0.93"));
    }

    proptest! {
        /// Metrics are scale-free: multiplying every count by k changes
        /// nothing (the true quotients are identical, so IEEE division
        /// rounds identically).
        #[test]
        fn report_is_scale_free(
            tn in 0u64..50, fp in 0u64..50, fn_ in 0u64..50, tp in 0u64..50,
            k in 1u64..100,
        ) {
            prop_assume!(tn + fp + fn_ + tp > 0);
            let base = report(&counts(tn, fp, fn_, tp)).unwrap();
            let scaled = report(&counts(tn * k, fp * k, fn_ * k, tp * k)).unwrap();
            prop_assert_eq!(base, scaled);
        }

        /// Complementing the scores mirrors the AUC when no ties exist.
        #[test]
        fn auc_complement_symmetry(seed in 0u64..2_000) {
            let mut rng = rng_from_seed(seed);
            let n = 40;
            // Strictly distinct scores: jitter by index.
            let scores: Vec<f64> = (0..n)
                .map(|j| uniform01(&mut rng) + j as f64 * 1e-9)
                .collect();
            let mut truths: Vec<bool> = (0..n).map(|_| coin(&mut rng)).collect();
            truths[0] = true;
            truths[1] = false;
            let fwd = auc(&scores, &truths).unwrap();
            let flipped: Vec<f64> = scores.iter().map(|s| 1.0 - s).collect();
            let rev = auc(&flipped, &truths).unwrap();
            prop_assert!((fwd + rev - 1.0).abs() < 1e-12);
        }

        /// The rank statistic always lands in [0, 1].
        #[test]
        fn auc_is_bounded(seed in 0u64..2_000) {
            let mut rng = rng_from_seed(seed);
            let n = 30;
            let scores: Vec<f64> = (0..n).map(|_| uniform01(&mut rng)).collect();
            let mut truths: Vec<bool> = (0..n).map(|_| coin(&mut rng)).collect();
            truths[0] = true;
            truths[1] = false;
            let a = auc(&scores, &truths).unwrap();
            prop_assert!((0.0..=1.0).contains(&a));
        }
    }
}
