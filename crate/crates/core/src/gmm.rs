//! Two-component 1D Gaussian mixtures fit by EM, and posterior thresholding.
//!
//! Component `a` always has the smaller mean. Initialization is
//! deterministic: means at the 10th and 90th percentiles, both variances at
//! the sample variance, equal weights.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;

pub const VARIANCE_FLOOR: f64 = 1e-6;
pub const DEFAULT_MAX_ITER: usize = 100;
pub const DEFAULT_TOL: f64 = 1e-6;
pub const MIN_VALUES: usize = 4;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gmm1DFit {
    pub weight_a: f64,
    pub weight_b: f64,
    pub mean_a: f64,
    pub mean_b: f64,
    pub var_a: f64,
    pub var_b: f64,
    /// Total log-likelihood of the data under the final parameters.
    pub log_likelihood: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PosteriorRow {
    pub p_component_a: f64,
    pub p_component_b: f64,
}

impl PosteriorRow {
    /// Binary entropy in nats.
    pub fn entropy(&self) -> f64 {
        let h = |p: f64| if p > 0.0 { -p * math::ln(p) } else { 0.0 };
        h(self.p_component_a) + h(self.p_component_b)
    }

    pub fn of(&self, component: CleanComponent) -> f64 {
        match component {
            CleanComponent::LargerMean => self.p_component_b,
            CleanComponent::SmallerMean => self.p_component_a,
        }
    }
}

/// Which mixture component holds the clean samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CleanComponent {
    /// Similarity scores: high similarity is clean.
    LargerMean,
    /// Discrepancy scores: low discrepancy is clean.
    SmallerMean,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmOptions {
    pub max_iter: usize,
    /// Stop once the mean per-sample log-likelihood changes by less than this.
    pub tol: f64,
    pub variance_floor: f64,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self {
            max_iter: DEFAULT_MAX_ITER,
            tol: DEFAULT_TOL,
            variance_floor: VARIANCE_FLOOR,
        }
    }
}

fn log_normal(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * (LN_2PI + math::ln(var) + d * d / var)
}

/// Linear-interpolated percentile of sorted data.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = math::floor(pos) as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

impl Gmm1DFit {
    /// Component responsibilities for one value.
    pub fn posterior(&self, value: f64) -> PosteriorRow {
        let la = math::ln(self.weight_a) + log_normal(value, self.mean_a, self.var_a);
        let lb = math::ln(self.weight_b) + log_normal(value, self.mean_b, self.var_b);
        // logistic of the log-odds keeps the pair summing to 1
        let p_b = 1.0 / (1.0 + math::exp(la - lb));
        PosteriorRow {
            p_component_a: 1.0 - p_b,
            p_component_b: p_b,
        }
    }

    pub fn log_likelihood_of(&self, values: &[f64]) -> f64 {
        values
            .iter()
            .map(|&x| {
                math::log_add_exp(
                    math::ln(self.weight_a) + log_normal(x, self.mean_a, self.var_a),
                    math::ln(self.weight_b) + log_normal(x, self.mean_b, self.var_b),
                )
            })
            .sum()
    }
}

/// Fits with the default options.
pub fn fit_gmm1d(values: &[f64]) -> Result<Gmm1DFit> {
    fit_gmm1d_with(values, EmOptions::default()).map(|(f, _)| f)
}

/// Fits a two-component mixture by EM and returns the log-likelihood after
/// initialization and after each iteration.
pub fn fit_gmm1d_with(values: &[f64], opts: EmOptions) -> Result<(Gmm1DFit, Vec<f64>)> {
    if values.len() < MIN_VALUES {
        return Err(Error::InsufficientData {
            needed: MIN_VALUES,
            got: values.len(),
        });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { term: "gmm input" });
    }
    let n = values.len() as f64;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted[sorted.len() - 1] - sorted[0] <= 1e-12 {
        return Err(Error::DegenerateData);
    }
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;

    let mut fit = Gmm1DFit {
        weight_a: 0.5,
        weight_b: 0.5,
        mean_a: percentile(&sorted, 0.1),
        mean_b: percentile(&sorted, 0.9),
        var_a: var.max(opts.variance_floor),
        var_b: var.max(opts.variance_floor),
        log_likelihood: 0.0,
        iterations: 0,
    };
    let mut resp_b = alloc::vec![0.0; values.len()];
    let mut ll = estep(&fit, values, &mut resp_b);
    let mut trace = alloc::vec![ll];

    for it in 1..=opts.max_iter {
        // M-step
        let nb: f64 = resp_b.iter().sum();
        let na = n - nb;
        if na <= 0.0 || nb <= 0.0 {
            // one component has collapsed onto nothing; stop at the last
            // valid parameters
            break;
        }
        let sum_b: f64 = values.iter().zip(&resp_b).map(|(x, r)| r * x).sum();
        let sum_a: f64 = values.iter().zip(&resp_b).map(|(x, r)| (1.0 - r) * x).sum();
        let mean_a = sum_a / na;
        let mean_b = sum_b / nb;
        let var_a = values
            .iter()
            .zip(&resp_b)
            .map(|(x, r)| (1.0 - r) * (x - mean_a) * (x - mean_a))
            .sum::<f64>()
            / na;
        let var_b = values
            .iter()
            .zip(&resp_b)
            .map(|(x, r)| r * (x - mean_b) * (x - mean_b))
            .sum::<f64>()
            / nb;
        fit.weight_a = na / n;
        fit.weight_b = 1.0 - fit.weight_a;
        fit.mean_a = mean_a;
        fit.mean_b = mean_b;
        fit.var_a = var_a.max(opts.variance_floor);
        fit.var_b = var_b.max(opts.variance_floor);
        fit.iterations = it;

        let next = estep(&fit, values, &mut resp_b);
        trace.push(next);
        let converged = math::abs(next - ll) / n < opts.tol;
        ll = next;
        if converged {
            break;
        }
    }
    fit.log_likelihood = ll;
    if fit.mean_a > fit.mean_b {
        core::mem::swap(&mut fit.mean_a, &mut fit.mean_b);
        core::mem::swap(&mut fit.var_a, &mut fit.var_b);
        core::mem::swap(&mut fit.weight_a, &mut fit.weight_b);
    }
    Ok((fit, trace))
}

/// Fills component-b responsibilities and returns the log-likelihood.
fn estep(fit: &Gmm1DFit, values: &[f64], resp_b: &mut [f64]) -> f64 {
    let lwa = math::ln(fit.weight_a);
    let lwb = math::ln(fit.weight_b);
    let mut ll = 0.0;
    for (r, &x) in resp_b.iter_mut().zip(values) {
        let la = lwa + log_normal(x, fit.mean_a, fit.var_a);
        let lb = lwb + log_normal(x, fit.mean_b, fit.var_b);
        let total = math::log_add_exp(la, lb);
        *r = math::exp(lb - total);
        ll += total;
    }
    ll
}

/// `true` where the designated clean component's posterior exceeds `threshold`.
pub fn partition_by_posterior(
    values: &[f64],
    fit: &Gmm1DFit,
    threshold: f64,
    clean: CleanComponent,
) -> Result<Vec<bool>> {
    check_threshold(threshold)?;
    Ok(values
        .iter()
        .map(|&v| fit.posterior(v).of(clean) > threshold)
        .collect())
}

pub(crate) fn check_threshold(threshold: f64) -> Result<()> {
    if threshold > 0.0 && threshold < 1.0 {
        Ok(())
    } else {
        Err(Error::config("theta", "threshold must lie in (0, 1)"))
    }
}

/// Scales values to `[0, 1]`. Constant input is reported as degenerate.
pub fn min_max_normalize(values: &[f64]) -> Result<Vec<f64>> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if values.is_empty() {
        return Ok(Vec::new());
    }
    if hi - lo <= 1e-12 {
        return Err(Error::DegenerateData);
    }
    Ok(values.iter().map(|v| (v - lo) / (hi - lo)).collect())
}
