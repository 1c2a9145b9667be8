//! Consistency-based classification.
//!
//! With the extractor frozen, the two heads are trained to disagree on the
//! stage-1 clean set. Samples they still agree on form the refined clean
//! set; the rest join the stage-1 noisy set.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::gmm::{self, CleanComponent, EmOptions};
use crate::linalg::DenseMatrix;
use crate::loss::{CrossEntropy, Discrepancy, Route};
use crate::math;
use crate::nn::{self, ModelParams, Objective, OptimState, ParamGroups, Term};
use crate::rng::Rng;
use crate::stage1::{ClassGroup, GroupFit, Partition, Stage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassFrequencies {
    pub weights: Vec<f64>,
}

impl ClassFrequencies {
    pub fn of(&self, class: usize) -> f64 {
        self.weights[class]
    }

    pub fn per_sample(&self, labels: &[usize]) -> Vec<f64> {
        labels.iter().map(|&y| self.weights[y]).collect()
    }
}

/// `w_c = N_c / N` over the noisy labels.
pub fn class_frequencies(noisy_labels: &[usize], class_count: usize) -> ClassFrequencies {
    let mut counts = vec![0usize; class_count];
    for &y in noisy_labels {
        counts[y] += 1;
    }
    let n = noisy_labels.len().max(1) as f64;
    ClassFrequencies {
        weights: counts.iter().map(|&k| k as f64 / n).collect(),
    }
}

/// L1 distance between two probability vectors.
pub fn discrepancy(p1: &[f64], p2: &[f64]) -> Result<f64> {
    if p1.len() != p2.len() {
        return Err(Error::Dimension {
            context: "discrepancy",
            expected: p1.len(),
            got: p2.len(),
        });
    }
    Ok(p1.iter().zip(p2).map(|(a, b)| math::abs(a - b)).sum())
}

pub fn weighted_discrepancy(p1: &[f64], p2: &[f64], w: f64) -> Result<f64> {
    Ok(w * discrepancy(p1, p2)?)
}

/// Score fed to the stage-2 mixture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConsistencyScore {
    /// Unweighted `D`.
    Plain,
    /// Class-frequency weighted `D*`.
    Weighted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage2Config {
    pub lambda_min: f64,
    pub n_max: usize,
    pub batch_size: usize,
    pub theta: f64,
    /// Adds cross-entropy on the clean set while the heads are pushed apart.
    pub supervised_guard: bool,
    pub score: ConsistencyScore,
    /// One mixture per noisy class instead of a single global one.
    pub per_class: bool,
}

impl Default for Stage2Config {
    fn default() -> Self {
        Self {
            lambda_min: 1.0,
            n_max: 50,
            batch_size: 64,
            theta: 0.5,
            supervised_guard: false,
            score: ConsistencyScore::Plain,
            per_class: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    /// Dataset indices of the stage-1 clean set, ascending.
    pub indices: Vec<usize>,
    pub d: Vec<f64>,
    pub d_star: Vec<f64>,
    pub n_max: usize,
    pub lambda_min: f64,
}

impl ConsistencyReport {
    pub fn mean_d_star(&self) -> f64 {
        mean(&self.d_star)
    }

    pub fn mean_d(&self) -> f64 {
        mean(&self.d)
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// `D` and `D*` for every dataset sample, in dataset order.
pub fn all_discrepancies(model: &ModelParams, features: &DenseMatrix, noisy_labels: &[usize], freqs: &ClassFrequencies) -> Result<(Vec<f64>, Vec<f64>)> {
    let fwd = model.forward(features)?;
    let mut d = Vec::with_capacity(features.rows());
    let mut ds = Vec::with_capacity(features.rows());
    for (i, &y) in noisy_labels.iter().enumerate() {
        let v = discrepancy(fwd.probs1.row(i), fwd.probs2.row(i))?;
        d.push(v);
        ds.push(freqs.of(y) * v);
    }
    Ok((d, ds))
}

pub fn evaluate_consistency(
    model: &ModelParams,
    dataset: &LabeledDataset,
    indices: &[usize],
    freqs: &ClassFrequencies,
    cfg: &Stage2Config,
) -> Result<ConsistencyReport> {
    let x = dataset.features.select_rows(indices);
    let labels: Vec<usize> = indices.iter().map(|&i| dataset.noisy_labels[i]).collect();
    let (d, d_star) = all_discrepancies(model, &x, &labels, freqs)?;
    Ok(ConsistencyReport {
        indices: indices.to_vec(),
        d,
        d_star,
        n_max: cfg.n_max,
        lambda_min: cfg.lambda_min,
    })
}

/// Trains the heads for `n_max` minibatch steps on
/// `-λ_min · mean D*` over `clean`, leaving the extractor untouched.
/// Returns the mean minibatch loss.
pub fn maximize_head_discrepancy(
    model: &mut ModelParams,
    optim: &mut OptimState,
    dataset: &LabeledDataset,
    clean: &[usize],
    freqs: &ClassFrequencies,
    cfg: &Stage2Config,
    rng: &mut Rng,
) -> Result<f64> {
    if clean.is_empty() {
        return Err(Error::EmptyCleanSet);
    }
    if cfg.lambda_min == 0.0 && !cfg.supervised_guard {
        return Ok(0.0);
    }
    let batch_size = cfg.batch_size.max(1).min(clean.len());
    let mut order = clean.to_vec();
    order.shuffle(rng);
    let mut cursor = 0;
    let mut total = 0.0;
    for _ in 0..cfg.n_max {
        if cursor + batch_size > order.len() {
            order.shuffle(rng);
            cursor = 0;
        }
        let idx = &order[cursor..cursor + batch_size];
        cursor += batch_size;
        let x = dataset.features.select_rows(idx);
        let labels: Vec<usize> = idx.iter().map(|&i| dataset.noisy_labels[i]).collect();
        let spread = Discrepancy {
            weights: freqs.per_sample(&labels),
            scale: -cfg.lambda_min,
            route: Route::Full,
        };
        let guard = CrossEntropy::from_labels(&labels, dataset.class_count);
        let mut objectives: Vec<&dyn Objective> = vec![&spread];
        if cfg.supervised_guard {
            objectives.push(&guard);
        }
        let values = nn::backward_step(
            model,
            optim,
            &[Term {
                batch: &x,
                objectives: &objectives,
            }],
            ParamGroups::HEADS_ONLY,
        )?;
        total += values.iter().sum::<f64>();
    }
    Ok(total / cfg.n_max.max(1) as f64)
}

/// Outcome of [`stage2_partition`]; `fallback` is set when the stage-1
/// partition was passed through unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct Stage2Outcome {
    pub partition: Partition,
    pub fallback: Option<String>,
}

/// Splits the stage-1 clean set by consistency.
///
/// `all_d` holds the chosen consistency score for every dataset sample. The
/// mixture is fit on the stage-1 clean members (min-max normalized over that
/// set) and its smaller-mean component is clean. `posterior_clean` of the
/// result keeps the stage-1 posterior for stage-1 noisy samples and maps the
/// stage-2 posterior of stage-1 clean samples onto `[t, 1]`, where `t` is the
/// largest stage-1 noisy posterior: stage 2 only reorders the stage-1 clean
/// set.
pub fn stage2_partition(s1: &Partition, all_d: &[f64], noisy_labels: &[usize], cfg: &Stage2Config) -> Result<Stage2Outcome> {
    gmm::check_threshold(cfg.theta)?;
    let fallback = |why: String| Stage2Outcome {
        partition: Partition {
            stage: Stage::S2,
            score: all_d.to_vec(),
            ..s1.clone()
        },
        fallback: Some(why),
    };
    let clean = s1.clean_indices();
    if clean.is_empty() {
        return Ok(fallback(String::from("empty stage-1 clean set")));
    }
    let groups: Vec<(ClassGroup, Vec<usize>)> = if cfg.per_class {
        let classes = noisy_labels.iter().copied().max().map_or(0, |m| m + 1);
        (0..classes)
            .map(|c| (ClassGroup::Own(c), clean.iter().copied().filter(|&i| noisy_labels[i] == c).collect()))
            .filter(|(_, v): &(ClassGroup, Vec<usize>)| !v.is_empty())
            .collect()
    } else {
        vec![(ClassGroup::Aggregate, clean.clone())]
    };

    let mut p2 = vec![0.0; all_d.len()];
    let mut fits = Vec::new();
    let mut any_fit = false;
    for (group, members) in groups {
        let values: Vec<f64> = members.iter().map(|&i| all_d[i]).collect();
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let fitted = gmm::min_max_normalize(&values).and_then(|v| gmm::fit_gmm1d_with(&v, EmOptions::default()));
        match fitted {
            Ok((fit, _)) => {
                any_fit = true;
                let span = hi - lo;
                if cfg.per_class {
                    for &i in &members {
                        p2[i] = fit.posterior((all_d[i] - lo) / span).of(CleanComponent::SmallerMean);
                    }
                } else {
                    for (i, p) in p2.iter_mut().enumerate() {
                        *p = fit.posterior((all_d[i] - lo) / span).of(CleanComponent::SmallerMean);
                    }
                }
                fits.push(GroupFit {
                    group,
                    fit: Some(fit),
                    error: None,
                });
            }
            Err(e) => {
                // an unsplittable group keeps its stage-1 verdict
                for &i in &members {
                    p2[i] = 1.0;
                }
                fits.push(GroupFit {
                    group,
                    fit: None,
                    error: Some(alloc::format!("{e}")),
                });
            }
        }
    }
    if !any_fit {
        return Ok(fallback(String::from("degenerate consistency scores")));
    }
    let is_clean = s1
        .is_clean
        .iter()
        .zip(&p2)
        .map(|(&c, &p)| c && p > cfg.theta)
        .collect();
    let floor = s1
        .is_clean
        .iter()
        .zip(&s1.posterior_clean)
        .filter(|(&c, _)| !c)
        .map(|(_, &p)| p)
        .fold(0.0, f64::max);
    let posterior_clean = s1
        .is_clean
        .iter()
        .zip(&s1.posterior_clean)
        .zip(&p2)
        .map(|((&c, &a), &b)| if c { floor + (1.0 - floor) * b } else { a })
        .collect();
    Ok(Stage2Outcome {
        partition: Partition {
            stage: Stage::S2,
            is_clean,
            score: all_d.to_vec(),
            posterior_clean,
            class_grouping: s1.class_grouping.clone(),
            fits,
        },
        fallback: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn discrepancy_examples() {
        assert_eq!(discrepancy(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        assert_eq!(discrepancy(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 2.0);
        assert!((discrepancy(&[0.6, 0.4], &[0.5, 0.5]).unwrap() - 0.2).abs() < 1e-15);
        assert!(discrepancy(&[1.0], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn weighted_discrepancy_examples() {
        let (p, q) = ([0.8, 0.2], [0.6, 0.4]);
        assert_eq!(weighted_discrepancy(&p, &q, 0.0).unwrap(), 0.0);
        assert_eq!(weighted_discrepancy(&p, &q, 1.0).unwrap(), discrepancy(&p, &q).unwrap());
        assert!((weighted_discrepancy(&p, &q, 0.3).unwrap() - 0.12).abs() < 1e-15);
    }

    #[test]
    fn frequency_examples() {
        assert_eq!(class_frequencies(&[0, 1, 1, 0], 2).weights, vec![0.5, 0.5]);
        let labels: Vec<usize> = (0..1000).map(|i| usize::from(i >= 900)).collect();
        assert_eq!(class_frequencies(&labels, 2).weights, vec![0.9, 0.1]);
    }

    fn s1_partition(n: usize) -> Partition {
        let mut p = Partition::all_clean(n, Stage::S1);
        p.is_clean[0] = false;
        p.posterior_clean[0] = 0.2;
        p
    }

    #[test]
    fn constant_scores_fall_back_to_stage_one() {
        let s1 = s1_partition(10);
        let out = stage2_partition(&s1, &[0.3; 10], &[0; 10], &Stage2Config::default()).unwrap();
        assert!(out.fallback.is_some());
        assert_eq!(out.partition.is_clean, s1.is_clean);
        assert_eq!(out.partition.stage, Stage::S2);
    }

    #[test]
    fn stage_two_nests_inside_stage_one() {
        let s1 = s1_partition(40);
        let d: Vec<f64> = (0..40).map(|i| if i % 4 == 0 { 1.5 } else { 0.1 + 0.001 * i as f64 }).collect();
        let out = stage2_partition(&s1, &d, &[0; 40], &Stage2Config::default()).unwrap();
        assert!(out.fallback.is_none());
        for i in 0..40 {
            if out.partition.is_clean[i] {
                assert!(s1.is_clean[i]);
            }
        }
        // the high-discrepancy quarter is rejected
        assert!(!out.partition.is_clean[4] && out.partition.is_clean[5]);
        let post = &out.partition.posterior_clean;
        assert_eq!(post[0], 0.2);
        assert!((1..40).all(|i| post[i] >= 0.2 && post[i] <= 1.0));
        assert!(post[5] > post[4]);
    }

    fn prob_pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (2usize..6).prop_flat_map(|c| {
            (prop::collection::vec(0.01f64..1.0, c), prop::collection::vec(0.01f64..1.0, c)).prop_map(|(a, b)| {
                let sa: f64 = a.iter().sum();
                let sb: f64 = b.iter().sum();
                (a.iter().map(|v| v / sa).collect(), b.iter().map(|v| v / sb).collect())
            })
        })
    }

    proptest! {
        #[test]
        fn discrepancy_is_symmetric_and_bounded((p, q) in prob_pair()) {
            let a = discrepancy(&p, &q).unwrap();
            prop_assert_eq!(a, discrepancy(&q, &p).unwrap());
            prop_assert!((0.0..=2.0 + 1e-12).contains(&a));
        }

        #[test]
        fn weighting_is_monotone_in_w((p, q) in prob_pair(), w in 0.0f64..0.9, dw in 0.01f64..0.1) {
            prop_assume!(discrepancy(&p, &q).unwrap() > 1e-9);
            prop_assert!(weighted_discrepancy(&p, &q, w + dw).unwrap() > weighted_discrepancy(&p, &q, w).unwrap());
        }

        #[test]
        fn frequencies_sum_to_one(labels in prop::collection::vec(0usize..5, 1..200)) {
            let f = class_frequencies(&labels, 5);
            prop_assert!((f.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
