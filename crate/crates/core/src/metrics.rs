//! Ranking and thresholded detection metrics.
//!
//! Tie handling is pinned because it changes third-decimal results:
//! ROC-AUC gives tied (positive, negative) pairs half credit, and average
//! precision groups tied scores into a single precision-recall cut.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Evaluation summary for one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub auc: f64,
    pub ap: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub threshold: f64,
    pub n_pos: usize,
    pub n_neg: usize,
}

fn check_lengths(scores: &[f64], labels: &[u8]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if labels.iter().any(|&l| l > 1) {
        return Err(Error::Data("labels must be 0 or 1".into()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("scores contain NaN/inf".into()));
    }
    Ok(())
}

/// ROC-AUC as the Mann–Whitney statistic: the fraction of
/// (positive, negative) pairs ranked correctly, ties counted 0.5.
/// Computed via average ranks in O(n log n).
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    check_lengths(scores, labels)?;
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Data(format!(
            "roc_auc undefined for single-class input ({n_pos} positives, {n_neg} negatives)"
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());
    // Average 1-based rank within each tied group.
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if labels[idx] == 1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let n_pos_f = n_pos as f64;
    Ok((rank_sum_pos - n_pos_f * (n_pos_f + 1.0) / 2.0) / (n_pos_f * n_neg as f64))
}

/// Average precision: sort by descending score with tied scores grouped
/// as one cut, then AP = Σ (Rᵢ − Rᵢ₋₁)·Pᵢ over successive cuts.
pub fn average_precision(scores: &[f64], labels: &[u8]) -> Result<f64> {
    check_lengths(scores, labels)?;
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    if n_pos == 0 {
        return Err(Error::Data("average_precision undefined without positives".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());
    let mut ap = 0.0;
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut prev_recall = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        for &idx in &order[i..=j] {
            if labels[idx] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
        }
        let recall = tp as f64 / n_pos as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j + 1;
    }
    Ok(ap)
}

/// Precision, recall and F1 predicting anomaly iff score ≥ threshold;
/// every 0/0 is defined as 0.
pub fn confusion_at(scores: &[f64], labels: &[u8], threshold: f64) -> Result<(f64, f64, f64)> {
    check_lengths(scores, labels)?;
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fn_ = 0usize;
    for (&s, &l) in scores.iter().zip(labels) {
        let predicted = s >= threshold;
        match (predicted, l) {
            (true, 1) => tp += 1,
            (true, 0) => fp += 1,
            (false, 1) => fn_ += 1,
            _ => {}
        }
    }
    let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let recall = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
    let f1 =
        if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    Ok((precision, recall, f1))
}

/// Picks the threshold maximizing F1 over all distinct validation scores,
/// breaking ties toward the lowest threshold (favoring recall).
pub fn select_threshold_max_f1(scores: &[f64], labels: &[u8]) -> Result<f64> {
    check_lengths(scores, labels)?;
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    if n_pos == 0 || n_pos == labels.len() {
        return Err(Error::Data("threshold selection needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());
    // Walking cuts in descending order: predicted-positive = everything
    // with score >= the cut's score.
    let mut candidates: Vec<(f64, f64)> = Vec::new(); // (threshold, f1)
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        for &idx in &order[i..=j] {
            if labels[idx] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
        }
        let precision = tp as f64 / (tp + fp) as f64;
        let recall = tp as f64 / n_pos as f64;
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        candidates.push((scores[order[i]], f1));
        i = j + 1;
    }
    // Ascending threshold scan keeps the lowest on F1 ties.
    let mut best = None;
    for &(threshold, f1) in candidates.iter().rev() {
        match best {
            None => best = Some((threshold, f1)),
            Some((_, best_f1)) if f1 > best_f1 => best = Some((threshold, f1)),
            _ => {}
        }
    }
    Ok(best.unwrap().0)
}

/// Builds the full report: ranking metrics on the test scores plus the
/// operating point at `threshold`.
pub fn full_report(scores: &[f64], labels: &[u8], threshold: f64) -> Result<MetricsReport> {
    let auc = roc_auc(scores, labels)?;
    let ap = average_precision(scores, labels)?;
    let (precision, recall, f1) = confusion_at(scores, labels, threshold)?;
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    Ok(MetricsReport {
        auc,
        ap,
        precision,
        recall,
        f1,
        threshold,
        n_pos,
        n_neg: labels.len() - n_pos,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn auc_hand_example_with_tie() {
        // pairs: (0.9,0.1)=1, (0.9,0.4)=1, (0.4,0.1)=1, (0.4,0.4)=0.5 -> 3.5/4
        let auc = roc_auc(&[0.9, 0.1, 0.4, 0.4], &[1, 0, 1, 0]).unwrap();
        assert!((auc - 0.875).abs() < 1e-12);
    }

    #[test]
    fn auc_separated_and_all_tied() {
        assert_eq!(roc_auc(&[0.9, 0.8, 0.2, 0.1], &[1, 1, 0, 0]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.5, 0.5, 0.5, 0.5], &[1, 0, 1, 0]).unwrap(), 0.5);
        assert_eq!(roc_auc(&[0.1, 0.2, 0.8], &[1, 1, 0]).unwrap(), 0.0);
    }

    #[test]
    fn auc_rejects_single_class() {
        assert!(matches!(roc_auc(&[0.5, 0.4], &[1, 1]), Err(Error::Data(_))));
        assert!(matches!(roc_auc(&[0.5, 0.4], &[0, 0]), Err(Error::Data(_))));
    }

    #[test]
    fn ap_hand_example() {
        // Descending labels [1,0,1]: cuts give 0.5*1 + 0 + 0.5*(2/3) = 5/6.
        let ap = average_precision(&[0.9, 0.6, 0.3], &[1, 0, 1]).unwrap();
        assert!((ap - 5.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn ap_perfect_ranking_is_one_and_constant_scores_give_prevalence() {
        let ap = average_precision(&[0.9, 0.8, 0.1, 0.2], &[1, 1, 0, 0]).unwrap();
        assert!((ap - 1.0).abs() < 1e-12);
        // All scores tied: one cut, AP = prevalence.
        let ap = average_precision(&[0.5; 10], &[1, 0, 0, 0, 1, 0, 0, 0, 0, 0]).unwrap();
        assert!((ap - 0.2).abs() < 1e-12);
        assert!(matches!(average_precision(&[0.5, 0.4], &[0, 0]), Err(Error::Data(_))));
    }

    #[test]
    fn confusion_hand_example() {
        let (p, r, f1) = confusion_at(&[0.9, 0.2, 0.6], &[1, 0, 0], 0.5).unwrap();
        assert!((p - 0.5).abs() < 1e-12);
        assert!((r - 1.0).abs() < 1e-12);
        assert!((f1 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn confusion_extreme_thresholds() {
        // Above max score: nothing predicted, recall 0, F1 0.
        let (p, r, f1) = confusion_at(&[0.9, 0.2], &[1, 1], 2.0).unwrap();
        assert_eq!((p, r, f1), (0.0, 0.0, 0.0));
        // Below min score with all-anomaly labels: perfect.
        let (p, r, f1) = confusion_at(&[0.9, 0.2], &[1, 1], 0.0).unwrap();
        assert_eq!((p, r, f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn threshold_selection_basics() {
        // Perfectly separated: the returned threshold achieves F1 = 1.
        let scores = [0.9, 0.8, 0.1, 0.2];
        let labels = [1, 1, 0, 0];
        let t = select_threshold_max_f1(&scores, &labels).unwrap();
        let (_, _, f1) = confusion_at(&scores, &labels, t).unwrap();
        assert_eq!(f1, 1.0);

        // One candidate strictly dominates.
        let scores = [0.9, 0.7, 0.5, 0.3];
        let labels = [1, 1, 0, 0];
        assert_eq!(select_threshold_max_f1(&scores, &labels).unwrap(), 0.7);

        assert!(matches!(select_threshold_max_f1(&[0.5, 0.6], &[1, 1]), Err(Error::Data(_))));
    }

    #[test]
    fn threshold_tie_breaks_low() {
        // F1 at 0.9: P=1, R=0.5 -> 2/3; at 0.3: P=0.5, R=1 -> 2/3; the two
        // middle cuts are lower. The tie resolves to the lower threshold.
        let scores = [0.9, 0.7, 0.5, 0.3];
        let labels = [1, 0, 0, 1];
        assert_eq!(select_threshold_max_f1(&scores, &labels).unwrap(), 0.3);
    }

    #[test]
    fn full_report_ranges() {
        let r = full_report(&[0.9, 0.4, 0.6, 0.1], &[1, 0, 1, 0], 0.5).unwrap();
        assert!(r.auc >= 0.0 && r.auc <= 1.0);
        assert!(r.ap >= 0.0 && r.ap <= 1.0);
        assert_eq!(r.n_pos, 2);
        assert_eq!(r.n_neg, 2);
    }

    // Brute-force oracles used by the property tests below.
    fn auc_pairs(scores: &[f64], labels: &[u8]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, &si) in scores.iter().enumerate() {
            if labels[i] != 1 {
                continue;
            }
            for (j, &sj) in scores.iter().enumerate() {
                if labels[j] != 0 {
                    continue;
                }
                den += 1.0;
                if si > sj {
                    num += 1.0;
                } else if si == sj {
                    num += 0.5;
                }
            }
        }
        num / den
    }

    proptest! {
        #[test]
        fn auc_matches_pair_enumeration(
            raw in proptest::collection::vec((0u8..2, 0i32..8), 4..50)
        ) {
            // Integer-ish scores force plenty of ties.
            let labels: Vec<u8> = raw.iter().map(|&(l, _)| l).collect();
            let scores: Vec<f64> = raw.iter().map(|&(_, s)| s as f64 / 4.0).collect();
            prop_assume!(labels.iter().any(|&l| l == 1) && labels.iter().any(|&l| l == 0));
            let fast = roc_auc(&scores, &labels).unwrap();
            prop_assert!((fast - auc_pairs(&scores, &labels)).abs() <= 1e-12);
        }

        #[test]
        fn auc_invariant_under_increasing_transform(
            raw in proptest::collection::vec((0u8..2, -4.0..4.0f64), 4..40)
        ) {
            let labels: Vec<u8> = raw.iter().map(|&(l, _)| l).collect();
            let scores: Vec<f64> = raw.iter().map(|&(_, s)| s).collect();
            prop_assume!(labels.iter().any(|&l| l == 1) && labels.iter().any(|&l| l == 0));
            let transformed: Vec<f64> = scores.iter().map(|&s| (0.7 * s).exp() + 3.0).collect();
            let a = roc_auc(&scores, &labels).unwrap();
            let b = roc_auc(&transformed, &labels).unwrap();
            prop_assert!((a - b).abs() <= 1e-12);
        }

        #[test]
        fn auc_of_negated_scores_complements(
            raw in proptest::collection::vec((0u8..2, -4.0..4.0f64), 4..40)
        ) {
            let labels: Vec<u8> = raw.iter().map(|&(l, _)| l).collect();
            let scores: Vec<f64> = raw.iter().map(|&(_, s)| s).collect();
            prop_assume!(labels.iter().any(|&l| l == 1) && labels.iter().any(|&l| l == 0));
            // Continuous draws are effectively tie-free.
            let neg: Vec<f64> = scores.iter().map(|&s| -s).collect();
            let sum = roc_auc(&scores, &labels).unwrap() + roc_auc(&neg, &labels).unwrap();
            prop_assert!((sum - 1.0).abs() <= 1e-9);
        }
    }
}
