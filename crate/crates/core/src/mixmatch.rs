//! MixMatch on feature vectors: jittered views stand in for image
//! augmentation.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::math;
use crate::nn::ModelParams;
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixMatchConfig {
    /// Sharpening temperature.
    pub temperature: f64,
    /// Beta(α, α) parameter of the mixup coefficient.
    pub alpha: f64,
    /// Jittered views per unlabeled sample.
    pub k: usize,
    /// Standard deviation of the additive Gaussian jitter.
    pub jitter: f64,
}

impl Default for MixMatchConfig {
    fn default() -> Self {
        Self {
            temperature: 0.5,
            alpha: 4.0,
            k: 2,
            jitter: 0.05,
        }
    }
}

/// Mixed inputs and soft targets; the first `n_labeled` rows come from the
/// labeled batch.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedBatch {
    pub inputs: DenseMatrix,
    pub targets: DenseMatrix,
    pub n_labeled: usize,
    pub lambda: f64,
}

/// `p^(1/T)` renormalized, computed in log space so that `T → 0` tends to
/// the one-hot argmax instead of underflowing.
pub fn sharpen(p: &[f64], temperature: f64) -> Vec<f64> {
    let logs: Vec<f64> = p
        .iter()
        .map(|&v| if v > 0.0 { math::ln(v) / temperature } else { f64::NEG_INFINITY })
        .collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logs.iter().map(|l| math::exp(l - max)).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

pub fn jitter(x: &DenseMatrix, sigma: f64, rng: &mut Rng) -> DenseMatrix {
    let mut out = x.clone();
    if sigma > 0.0 {
        for v in out.data_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *v += sigma * z;
        }
    }
    out
}

/// Sharpened average of both heads' softmax over `k` jittered views.
pub fn guess_labels(model: &ModelParams, unlabeled: &DenseMatrix, cfg: &MixMatchConfig, rng: &mut Rng) -> Result<DenseMatrix> {
    if cfg.k < 1 {
        return Err(Error::config("mixmatch.k", "need at least one view"));
    }
    let classes = model.class_count();
    let mut avg = DenseMatrix::zeros(unlabeled.rows(), classes);
    for _ in 0..cfg.k {
        let view = jitter(unlabeled, cfg.jitter, rng);
        let p = model.predict_proba(&view)?;
        for (a, v) in avg.data_mut().iter_mut().zip(p.data()) {
            *a += v;
        }
    }
    for a in avg.data_mut() {
        *a /= cfg.k as f64;
    }
    let mut out = DenseMatrix::zeros(unlabeled.rows(), classes);
    for i in 0..unlabeled.rows() {
        out.row_mut(i).copy_from_slice(&sharpen(avg.row(i), cfg.temperature));
    }
    Ok(out)
}

/// `λ·a + (1-λ)·a[perm]` on inputs and targets alike.
pub fn mixup(inputs: &DenseMatrix, targets: &DenseMatrix, lambda: f64, perm: &[usize]) -> (DenseMatrix, DenseMatrix) {
    let mix = |m: &DenseMatrix| {
        let mut out = m.clone();
        for (i, &j) in perm.iter().enumerate() {
            let other = m.row(j);
            for (o, &b) in out.row_mut(i).iter_mut().zip(other) {
                *o = lambda * *o + (1.0 - lambda) * b;
            }
        }
        out
    };
    (mix(inputs), mix(targets))
}

/// `max(λ, 1-λ)` for `λ ~ Beta(α, α)`.
pub fn draw_lambda(alpha: f64, rng: &mut Rng) -> Result<f64> {
    let beta = Beta::new(alpha, alpha).map_err(|_| Error::config("mixmatch.alpha", "must be positive"))?;
    let l: f64 = beta.sample(rng);
    Ok(l.max(1.0 - l))
}

fn stack(parts: &[&DenseMatrix]) -> DenseMatrix {
    let cols = parts[0].cols();
    let mut data = Vec::new();
    for p in parts {
        data.extend_from_slice(p.data());
    }
    let rows = data.len() / cols.max(1);
    DenseMatrix::new(rows, cols, data).expect("stacked rows are finite")
}

/// Builds one mixed batch from a labeled batch (one jittered view, one-hot
/// targets) and an unlabeled batch (`k` jittered views, guessed targets).
pub fn mixmatch_lite(
    model: &ModelParams,
    labeled: &DenseMatrix,
    labeled_targets: &DenseMatrix,
    unlabeled: &DenseMatrix,
    cfg: &MixMatchConfig,
    rng: &mut Rng,
) -> Result<MixedBatch> {
    let lambda = draw_lambda(cfg.alpha, rng)?;
    mixmatch_with_lambda(model, labeled, labeled_targets, unlabeled, cfg, lambda, rng)
}

pub fn mixmatch_with_lambda(
    model: &ModelParams,
    labeled: &DenseMatrix,
    labeled_targets: &DenseMatrix,
    unlabeled: &DenseMatrix,
    cfg: &MixMatchConfig,
    lambda: f64,
    rng: &mut Rng,
) -> Result<MixedBatch> {
    if cfg.k < 1 {
        return Err(Error::config("mixmatch.k", "need at least one view"));
    }
    let x = jitter(labeled, cfg.jitter, rng);
    let mut inputs = alloc::vec![x];
    let mut targets = alloc::vec![labeled_targets.clone()];
    if unlabeled.rows() > 0 {
        let guessed = guess_labels(model, unlabeled, cfg, rng)?;
        for _ in 0..cfg.k {
            inputs.push(jitter(unlabeled, cfg.jitter, rng));
            targets.push(guessed.clone());
        }
    }
    let all_x = stack(&inputs.iter().collect::<Vec<_>>());
    let all_t = stack(&targets.iter().collect::<Vec<_>>());
    let mut perm: Vec<usize> = (0..all_x.rows()).collect();
    perm.shuffle(rng);
    let (inputs, targets) = mixup(&all_x, &all_t, lambda, &perm);
    Ok(MixedBatch {
        inputs,
        targets,
        n_labeled: labeled.rows(),
        lambda,
    })
}
