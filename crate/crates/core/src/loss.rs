//! Loss terms over the two heads.
//!
//! Every term is averaged over the rows it covers and summed over both heads.

use alloc::vec::Vec;
use core::ops::Range;

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::math;
use crate::nn::{Forward, LogitGrads, Objective};

fn check_rows(rows: &Range<usize>, batch_rows: usize, targets: Option<&DenseMatrix>) -> Result<()> {
    if rows.end > batch_rows || rows.start > rows.end {
        return Err(Error::Dimension {
            context: "loss row range",
            expected: batch_rows,
            got: rows.end,
        });
    }
    if let Some(t) = targets {
        if t.rows() != rows.len() {
            return Err(Error::Dimension {
                context: "loss target rows",
                expected: rows.len(),
                got: t.rows(),
            });
        }
    }
    Ok(())
}

/// Backprop through softmax: `dz_k = p_k (g_k - Σ_j g_j p_j)`.
fn softmax_vjp(p: &[f64], g: &[f64], out: &mut [f64]) {
    let inner: f64 = p.iter().zip(g).map(|(a, b)| a * b).sum();
    for ((o, &pk), &gk) in out.iter_mut().zip(p).zip(g) {
        *o += pk * (gk - inner);
    }
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + math::ln(logits.iter().map(|z| math::exp(z - max)).sum::<f64>());
    logits.iter().map(|z| z - lse).collect()
}

/// Soft-target cross-entropy on both heads.
#[derive(Debug, Clone)]
pub struct CrossEntropy {
    pub targets: DenseMatrix,
    pub rows: Range<usize>,
    pub scale: f64,
}

impl CrossEntropy {
    pub fn new(targets: DenseMatrix) -> Self {
        let n = targets.rows();
        Self {
            targets,
            rows: 0..n,
            scale: 1.0,
        }
    }

    /// One-hot targets from class ids.
    pub fn from_labels(labels: &[usize], classes: usize) -> Self {
        Self::new(one_hot(labels, classes))
    }
}

pub fn one_hot(labels: &[usize], classes: usize) -> DenseMatrix {
    let mut t = DenseMatrix::zeros(labels.len(), classes);
    for (i, &y) in labels.iter().enumerate() {
        t.set(i, y, 1.0);
    }
    t
}

impl Objective for CrossEntropy {
    fn name(&self) -> &'static str {
        "cross-entropy"
    }

    fn evaluate(&self, fwd: &Forward) -> Result<(f64, LogitGrads)> {
        let n_batch = fwd.logits1.rows();
        check_rows(&self.rows, n_batch, Some(&self.targets))?;
        let mut grads = LogitGrads::zeros(n_batch, fwd.logits1.cols());
        let n = self.rows.len();
        if n == 0 || self.scale == 0.0 {
            return Ok((0.0, grads));
        }
        let s = self.scale / n as f64;
        let mut value = 0.0;
        for (t_row, i) in self.rows.clone().enumerate() {
            let t = self.targets.row(t_row);
            let t_mass: f64 = t.iter().sum();
            for (logits, probs, g) in [
                (&fwd.logits1, &fwd.probs1, &mut grads.full1),
                (&fwd.logits2, &fwd.probs2, &mut grads.full2),
            ] {
                let lp = log_softmax(logits.row(i));
                value -= t.iter().zip(&lp).map(|(a, b)| a * b).sum::<f64>();
                for ((gk, &pk), &tk) in g.row_mut(i).iter_mut().zip(probs.row(i)).zip(t) {
                    *gk = s * (pk * t_mass - tk);
                }
            }
        }
        Ok((value * s, grads))
    }
}

/// Mean squared error between each head's probabilities and soft targets,
/// averaged over rows and classes.
#[derive(Debug, Clone)]
pub struct SquaredError {
    pub targets: DenseMatrix,
    pub rows: Range<usize>,
    pub scale: f64,
}

impl Objective for SquaredError {
    fn name(&self) -> &'static str {
        "squared-error"
    }

    fn evaluate(&self, fwd: &Forward) -> Result<(f64, LogitGrads)> {
        let n_batch = fwd.logits1.rows();
        let classes = fwd.logits1.cols();
        check_rows(&self.rows, n_batch, Some(&self.targets))?;
        let mut grads = LogitGrads::zeros(n_batch, classes);
        let n = self.rows.len();
        if n == 0 || self.scale == 0.0 {
            return Ok((0.0, grads));
        }
        let s = self.scale / (n * classes) as f64;
        let mut value = 0.0;
        let mut dp = alloc::vec![0.0; classes];
        for (t_row, i) in self.rows.clone().enumerate() {
            let t = self.targets.row(t_row);
            for (probs, g) in [(&fwd.probs1, &mut grads.full1), (&fwd.probs2, &mut grads.full2)] {
                let p = probs.row(i);
                for ((d, &pk), &tk) in dp.iter_mut().zip(p).zip(t) {
                    value += (pk - tk) * (pk - tk);
                    *d = 2.0 * s * (pk - tk);
                }
                softmax_vjp(p, &dp, g.row_mut(i));
            }
        }
        Ok((value * s, grads))
    }
}

/// Which parameters a discrepancy term may move.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    /// Heads and extractor.
    Full,
    /// Only the extractor, through the feature gradient.
    ExtractorOnly,
}

/// `scale · mean_i w_i Σ_c |p1_ic - p2_ic|`.
///
/// A negative scale with heads-only updates pushes the heads apart; a
/// positive scale routed to the extractor pulls them back together.
#[derive(Debug, Clone)]
pub struct Discrepancy {
    pub weights: Vec<f64>,
    pub scale: f64,
    pub route: Route,
}

impl Objective for Discrepancy {
    fn name(&self) -> &'static str {
        match self.route {
            Route::Full => "discrepancy",
            Route::ExtractorOnly => "extractor discrepancy",
        }
    }

    fn evaluate(&self, fwd: &Forward) -> Result<(f64, LogitGrads)> {
        let n = fwd.probs1.rows();
        let classes = fwd.probs1.cols();
        if self.weights.len() != n {
            return Err(Error::Dimension {
                context: "discrepancy weights",
                expected: n,
                got: self.weights.len(),
            });
        }
        let mut grads = LogitGrads::zeros(n, classes);
        if n == 0 || self.scale == 0.0 {
            return Ok((0.0, grads));
        }
        let s = self.scale / n as f64;
        let (g1, g2) = match self.route {
            Route::Full => (&mut grads.full1, &mut grads.full2),
            Route::ExtractorOnly => (&mut grads.extractor_only1, &mut grads.extractor_only2),
        };
        let mut value = 0.0;
        let mut d1 = alloc::vec![0.0; classes];
        let mut d2 = alloc::vec![0.0; classes];
        for i in 0..n {
            let p = fwd.probs1.row(i);
            let q = fwd.probs2.row(i);
            let w = self.weights[i];
            for c in 0..classes {
                let diff = p[c] - q[c];
                value += w * math::abs(diff);
                let sg = s * w * math::sign(diff);
                d1[c] = sg;
                d2[c] = -sg;
            }
            softmax_vjp(p, &d1, g1.row_mut(i));
            softmax_vjp(q, &d2, g2.row_mut(i));
        }
        Ok((value * s, grads))
    }
}
