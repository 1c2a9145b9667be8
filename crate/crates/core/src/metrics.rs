//! Evaluation metrics.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{self, DenseMatrix};

/// Area under the ROC curve via the Mann-Whitney U statistic, with tied
/// scores counted as half a win.
pub fn auc(scores: &[f64], positive: &[bool]) -> Result<f64> {
    if scores.len() != positive.len() {
        return Err(Error::Dimension {
            context: "auc inputs",
            expected: scores.len(),
            got: positive.len(),
        });
    }
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedAuc);
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite { term: "auc score" });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // midranks over tie blocks, 1-based
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            if positive[k] {
                rank_sum_pos += midrank;
            }
        }
        i = j + 1;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    let u = rank_sum_pos - p * (p + 1.0) / 2.0;
    Ok(u / (p * n))
}

/// Proportion of the clean set carried by each (noisy) class.
pub fn class_distribution(is_clean: &[bool], noisy_labels: &[usize], class_count: usize) -> Result<Vec<f64>> {
    let mut counts = vec![0usize; class_count];
    for (&c, &y) in is_clean.iter().zip(noisy_labels) {
        if c {
            counts[y] += 1;
        }
    }
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(Error::EmptyCleanSet);
    }
    Ok(counts.iter().map(|&k| k as f64 / total as f64).collect())
}

/// Population variance.
pub fn variance(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

pub fn accuracy(probs: &DenseMatrix, labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let correct = probs
        .iter_rows()
        .zip(labels)
        .filter(|(row, &y)| linalg::argmax(row) == y)
        .count();
    correct as f64 / labels.len() as f64
}

/// Fraction of selected samples that are truly clean; `None` when nothing is
/// selected.
pub fn precision(selected: &[bool], truly_clean: &[bool]) -> Option<f64> {
    let chosen = selected.iter().filter(|&&s| s).count();
    if chosen == 0 {
        return None;
    }
    let hits = selected.iter().zip(truly_clean).filter(|(&s, &t)| s && t).count();
    Some(hits as f64 / chosen as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::from_seed;
    use proptest::prelude::*;
    use rand::Rng as _;

    /// O(n²) pair counting.
    fn auc_pairs(scores: &[f64], positive: &[bool]) -> f64 {
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for (i, &pi) in positive.iter().enumerate() {
            for (j, &pj) in positive.iter().enumerate() {
                if pi && !pj {
                    pairs += 1.0;
                    if scores[i] > scores[j] {
                        wins += 1.0;
                    } else if scores[i] == scores[j] {
                        wins += 0.5;
                    }
                }
            }
        }
        wins / pairs
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]).unwrap(), 1.0);
        assert_eq!(auc(&[0.5; 6], &[true, false, true, false, false, true]).unwrap(), 0.5);
        assert_eq!(auc(&[0.1, 0.2], &[true, true]), Err(Error::UndefinedAuc));
    }

    #[test]
    fn auc_of_random_scores_is_near_half() {
        let mut rng = from_seed(17);
        let scores: Vec<f64> = (0..10_000).map(|_| rng.random_range(0.0..1.0)).collect();
        let truth: Vec<bool> = (0..10_000).map(|_| rng.random_bool(0.5)).collect();
        let a = auc(&scores, &truth).unwrap();
        assert!((a - 0.5).abs() < 0.02, "{a}");
    }

    #[test]
    fn class_distribution_examples() {
        let d = class_distribution(&[true, true, false], &[2, 2, 0], 4).unwrap();
        assert_eq!(d, vec![0.0, 0.0, 1.0, 0.0]);
        let d = class_distribution(&[true; 8], &[0, 1, 2, 3, 3, 2, 1, 0], 4).unwrap();
        assert_eq!(d, vec![0.25; 4]);
        assert_eq!(class_distribution(&[false], &[0], 2), Err(Error::EmptyCleanSet));
    }

    #[test]
    fn precision_counts_truly_clean_selections() {
        assert_eq!(precision(&[true, true, false], &[true, false, false]), Some(0.5));
        assert_eq!(precision(&[false], &[true]), None);
    }

    fn scored() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
        prop::collection::vec((0u8..12, any::<bool>()), 2..60).prop_map(|v| {
            let s: Vec<f64> = v.iter().map(|x| x.0 as f64 / 4.0).collect();
            let mut t: Vec<bool> = v.iter().map(|x| x.1).collect();
            // keep both classes present
            t[0] = true;
            t[1] = false;
            (s, t)
        })
    }

    proptest! {
        #[test]
        fn auc_matches_pair_counting((s, t) in scored()) {
            let a = auc(&s, &t).unwrap();
            prop_assert!((a - auc_pairs(&s, &t)).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&a));
        }

        #[test]
        fn auc_complement_sums_to_one((s, t) in scored()) {
            let flipped: Vec<bool> = t.iter().map(|x| !x).collect();
            prop_assert!((auc(&s, &t).unwrap() + auc(&s, &flipped).unwrap() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn auc_is_invariant_under_monotone_maps((s, t) in scored()) {
            let mapped: Vec<f64> = s.iter().map(|x| libm::exp(3.0 * x) - 7.0).collect();
            prop_assert_eq!(auc(&s, &t).unwrap(), auc(&mapped, &t).unwrap());
        }
    }
}
