//! Label-noise injectors. All of them keep features and true labels intact
//! and only rewrite `noisy_labels`.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::linalg::{self, DenseMatrix};
use crate::math;
use crate::nn::{ModelParams, ModelShape, OptimState};
use crate::rng::Rng;
use crate::trainer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKind {
    None,
    /// Flip the top-r% samples toward the class a probe classifier confuses
    /// them with most.
    ClassificationBased,
    /// Flip toward the nearest other class with probability growing as the
    /// sample approaches the class boundary.
    Boundary,
    /// Flip uniformly to another class, independent of the features.
    Symmetric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    /// `r` for classification-based noise, `η` otherwise.
    pub ratio: f64,
}

/// Training settings of the probe classifier behind classification-based
/// noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            learning_rate: 0.02,
            momentum: 0.9,
            weight_decay: 5e-4,
            batch_size: 64,
        }
    }
}

/// Softening of the boundary closeness weight, as a fraction of the median
/// positive margin.
pub const BOUNDARY_SOFTNESS: f64 = 0.1;

pub fn apply_noise(dataset: &LabeledDataset, spec: &NoiseSpec, probe: &ProbeConfig, rng: &mut Rng) -> Result<LabeledDataset> {
    match spec.kind {
        NoiseKind::None => Ok(dataset.clone()),
        NoiseKind::ClassificationBased => apply_classification_noise(dataset, probe, spec.ratio, rng),
        NoiseKind::Boundary => apply_boundary_idn(dataset, spec.ratio, rng),
        NoiseKind::Symmetric => apply_symmetric_noise(dataset, spec.ratio, rng),
    }
}

/// Trains a fresh probe on the true labels and returns its ensemble softmax
/// averaged over every epoch.
pub fn probe_predictions(dataset: &LabeledDataset, probe: &ProbeConfig, rng: &mut Rng) -> Result<DenseMatrix> {
    let shape = ModelShape::desk_scale(dataset.dim(), dataset.class_count);
    let mut head2_rng = crate::rng::from_seed(rng.random());
    let mut model = ModelParams::init(&shape, rng, &mut head2_rng)?;
    let mut optim = OptimState::new(&model, probe.learning_rate, probe.momentum, probe.weight_decay)?;
    let all: Vec<usize> = (0..dataset.len()).collect();
    let mut avg = DenseMatrix::zeros(dataset.len(), dataset.class_count);
    for _ in 0..probe.epochs {
        trainer::cross_entropy_epoch(
            &mut model,
            &mut optim,
            &dataset.features,
            &dataset.true_labels,
            &all,
            probe.batch_size,
            rng,
        )?;
        let p = model.predict_proba(&dataset.features)?;
        for (a, v) in avg.data_mut().iter_mut().zip(p.data()) {
            *a += v;
        }
    }
    let k = probe.epochs.max(1) as f64;
    for a in avg.data_mut() {
        *a /= k;
    }
    Ok(avg)
}

/// For each sample, the most probable class other than the true one and its
/// averaged probability.
pub fn flip_candidates(true_labels: &[usize], avg_probs: &DenseMatrix) -> Vec<(usize, f64)> {
    true_labels
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            let row = avg_probs.row(i);
            let mut best = if y == 0 { 1 } else { 0 };
            for (c, &p) in row.iter().enumerate() {
                if c != y && p > row[best] {
                    best = c;
                }
            }
            (best, row[best])
        })
        .collect()
}

/// Flips exactly `⌊r·N⌋` samples: those with the largest candidate
/// probability, ties broken by ascending id.
pub fn flip_top_candidates(dataset: &LabeledDataset, avg_probs: &DenseMatrix, r: f64) -> Result<LabeledDataset> {
    if !(0.0..=1.0).contains(&r) {
        return Err(Error::config("noise.ratio", "r must lie in [0, 1]"));
    }
    let candidates = flip_candidates(&dataset.true_labels, avg_probs);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.sort_by(|&a, &b| {
        candidates[b]
            .1
            .total_cmp(&candidates[a].1)
            .then(dataset.ids[a].cmp(&dataset.ids[b]))
    });
    let k = math::floor(r * dataset.len() as f64) as usize;
    let mut noisy = dataset.true_labels.clone();
    for &i in order.iter().take(k) {
        noisy[i] = candidates[i].0;
    }
    Ok(dataset.with_noisy_labels(noisy))
}

pub fn apply_classification_noise(
    dataset: &LabeledDataset,
    probe: &ProbeConfig,
    r: f64,
    rng: &mut Rng,
) -> Result<LabeledDataset> {
    if !(0.0..=1.0).contains(&r) {
        return Err(Error::config("noise.ratio", "r must lie in [0, 1]"));
    }
    if r == 0.0 {
        return Ok(dataset.with_noisy_labels(dataset.true_labels.clone()));
    }
    let avg = probe_predictions(dataset, probe, rng)?;
    flip_top_candidates(dataset, &avg, r)
}

/// Distance to the nearest other class center minus distance to the own
/// center (centers are true-label class means). Small or negative margins
/// sit at or past the class boundary.
pub fn boundary_margins(dataset: &LabeledDataset) -> Vec<(f64, usize)> {
    let centers = dataset.class_means(&dataset.true_labels);
    let present = dataset.class_counts(&dataset.true_labels);
    (0..dataset.len())
        .map(|i| {
            let x = dataset.features.row(i);
            let y = dataset.true_labels[i];
            let dist = |c: usize| {
                let d: Vec<f64> = x.iter().zip(centers.row(c)).map(|(a, b)| a - b).collect();
                linalg::norm(&d)
            };
            let own = dist(y);
            let mut nearest = (f64::INFINITY, y);
            for c in (0..dataset.class_count).filter(|&c| c != y && present[c] > 0) {
                let d = dist(c);
                if d < nearest.0 {
                    nearest = (d, c);
                }
            }
            (nearest.0 - own, nearest.1)
        })
        .collect()
}

/// Per-sample flip probabilities with mean `eta`: `min(1, k / (ε + max(0, m)))`
/// for margin `m`, with `k` found by bisection.
pub fn boundary_flip_probabilities(margins: &[f64], eta: f64) -> Vec<f64> {
    let n = margins.len();
    if n == 0 || eta <= 0.0 {
        return vec![0.0; n];
    }
    let mut positive: Vec<f64> = margins.iter().map(|m| m.max(0.0)).filter(|m| *m > 0.0).collect();
    positive.sort_by(f64::total_cmp);
    let median = positive.get(positive.len() / 2).copied().unwrap_or(1.0);
    let eps = (BOUNDARY_SOFTNESS * median).max(1e-12);
    let closeness: Vec<f64> = margins.iter().map(|m| 1.0 / (eps + m.max(0.0))).collect();
    let target = eta * n as f64;
    let expected = |k: f64| closeness.iter().map(|c| (k * c).min(1.0)).sum::<f64>();
    let (mut lo, mut hi) = (0.0, 1.0);
    while expected(hi) < target {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if expected(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    closeness.iter().map(|c| (hi * c).min(1.0)).collect()
}

/// Systematic unequal-probability sampling: sample `i` is chosen with
/// probability `probs[i]`, and the number chosen is within one of `Σ probs`.
pub fn systematic_sample(probs: &[f64], rng: &mut Rng) -> Vec<bool> {
    let u: f64 = rng.random_range(0.0..1.0);
    let mut cumulative = 0.0;
    probs
        .iter()
        .map(|&p| {
            let before = cumulative;
            cumulative += p;
            // a grid point u + k lies in [before, cumulative)
            math::floor(cumulative - u) > math::floor(before - u)
        })
        .collect()
}

pub fn apply_boundary_idn(dataset: &LabeledDataset, eta: f64, rng: &mut Rng) -> Result<LabeledDataset> {
    if !(0.0..1.0).contains(&eta) {
        return Err(Error::config("noise.ratio", "eta must lie in [0, 1)"));
    }
    if eta == 0.0 {
        return Ok(dataset.with_noisy_labels(dataset.true_labels.clone()));
    }
    let margins = boundary_margins(dataset);
    let m: Vec<f64> = margins.iter().map(|m| m.0).collect();
    let probs = boundary_flip_probabilities(&m, eta);
    let chosen = systematic_sample(&probs, rng);
    let noisy = dataset
        .true_labels
        .iter()
        .zip(&chosen)
        .zip(&margins)
        .map(|((&y, &flip), &(_, other))| if flip { other } else { y })
        .collect();
    Ok(dataset.with_noisy_labels(noisy))
}

pub fn apply_symmetric_noise(dataset: &LabeledDataset, eta: f64, rng: &mut Rng) -> Result<LabeledDataset> {
    if !(0.0..1.0).contains(&eta) {
        return Err(Error::config("noise.ratio", "eta must lie in [0, 1)"));
    }
    let c = dataset.class_count;
    let noisy = dataset
        .true_labels
        .iter()
        .map(|&y| {
            if eta > 0.0 && rng.random_bool(eta) {
                (y + 1 + rng.random_range(0..c - 1)) % c
            } else {
                y
            }
        })
        .collect();
    Ok(dataset.with_noisy_labels(noisy))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_blobs, BlobSpec};
    use crate::rng::from_seed;

    fn blobs(n_per_class: usize, seed: u64) -> LabeledDataset {
        let spec = BlobSpec {
            n_per_class,
            class_count: 4,
            dim: 8,
            center_spread: 1.0,
            cluster_std: 1.0,
            imbalance_ratios: Vec::new(),
            center_layout: crate::data::CenterLayout::Gaussian,
        };
        make_blobs(&spec, &mut from_seed(seed)).unwrap().0
    }

    #[test]
    fn zero_ratio_is_identity() {
        let d = blobs(50, 1);
        let mut rng = from_seed(2);
        for out in [
            apply_boundary_idn(&d, 0.0, &mut rng).unwrap(),
            apply_symmetric_noise(&d, 0.0, &mut rng).unwrap(),
            apply_classification_noise(&d, &ProbeConfig::default(), 0.0, &mut rng).unwrap(),
        ] {
            assert_eq!(out, d);
        }
    }

    #[test]
    fn ratio_out_of_range_is_rejected() {
        let d = blobs(20, 1);
        let mut rng = from_seed(2);
        assert!(apply_boundary_idn(&d, 1.0, &mut rng).is_err());
        assert!(apply_symmetric_noise(&d, 1.0, &mut rng).is_err());
        assert!(apply_classification_noise(&d, &ProbeConfig::default(), 1.5, &mut rng).is_err());
        assert!(flip_top_candidates(&d, &DenseMatrix::zeros(80, 4), -0.1).is_err());
    }

    #[test]
    fn top_candidates_flip_exact_count_and_never_to_truth() {
        let d = blobs(125, 3);
        let mut rng = from_seed(4);
        let mut probs = DenseMatrix::zeros(d.len(), 4);
        for i in 0..d.len() {
            let raw: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..1.0)).collect();
            let s: f64 = raw.iter().sum();
            for (c, v) in raw.iter().enumerate() {
                probs.set(i, c, v / s);
            }
        }
        let out = flip_top_candidates(&d, &probs, 0.4).unwrap();
        assert_eq!(out.flip_count(), 200);
        assert_eq!(out.features, d.features);
        assert_eq!(out.true_labels, d.true_labels);
    }

    #[test]
    fn boundary_probabilities_hit_target_mean() {
        let d = blobs(250, 5);
        let m: Vec<f64> = boundary_margins(&d).iter().map(|x| x.0).collect();
        let p = boundary_flip_probabilities(&m, 0.3);
        let mean = p.iter().sum::<f64>() / p.len() as f64;
        assert!((mean - 0.3).abs() < 1e-9);
        assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn systematic_sample_count_is_within_one() {
        let mut rng = from_seed(6);
        let probs: Vec<f64> = (0..500).map(|_| rng.random_range(0.0..1.0)).collect();
        let total: f64 = probs.iter().sum();
        for seed in 0..20 {
            let k = systematic_sample(&probs, &mut from_seed(seed)).iter().filter(|&&b| b).count();
            assert!((k as f64 - total).abs() <= 1.0);
        }
        let sure = systematic_sample(&[1.0, 0.0, 1.0], &mut rng);
        assert_eq!(sure, vec![true, false, true]);
    }

    #[test]
    fn boundary_flips_go_to_nearest_other_class() {
        let d = blobs(250, 7);
        let out = apply_boundary_idn(&d, 0.3, &mut from_seed(8)).unwrap();
        let margins = boundary_margins(&d);
        for ((&noisy, &truth), m) in out.noisy_labels.iter().zip(&d.true_labels).zip(&margins) {
            if noisy != truth {
                assert_eq!(noisy, m.1);
            }
        }
        assert_eq!(out.features, d.features);
    }

    #[test]
    fn symmetric_never_maps_to_truth_and_is_deterministic() {
        let d = blobs(250, 9);
        let a = apply_symmetric_noise(&d, 0.5, &mut from_seed(10)).unwrap();
        let b = apply_symmetric_noise(&d, 0.5, &mut from_seed(10)).unwrap();
        assert_eq!(a, b);
        assert!(a.flip_count() > 0);
    }
}
