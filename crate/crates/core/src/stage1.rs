//! Feature-based clustering.
//!
//! Samples are scored by the cosine similarity between their normalized
//! feature and the center of their noisy-label class. Each class is split by
//! its own two-component GMM over min-max normalized scores. Classes whose
//! split is too uncertain (average binary entropy above `theta_agg`) or too
//! small to fit are pooled into one aggregate group with a single GMM.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmm::{self, CleanComponent, EmOptions, Gmm1DFit, PosteriorRow};
use crate::linalg::{self, DenseMatrix};
use crate::nn::ModelParams;

/// Labels used to decide which class a feature contributes to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MembershipSource {
    NoisyLabel,
    PredictedLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassCenters {
    /// Unit-norm center per class; `None` for classes without members.
    pub centers: Vec<Option<Vec<f64>>>,
    pub member_counts: Vec<usize>,
    pub membership_source: MembershipSource,
}

impl ClassCenters {
    pub fn get(&self, class: usize) -> Result<&[f64]> {
        self.centers
            .get(class)
            .and_then(|c| c.as_deref())
            .ok_or(Error::MissingCenter { class })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    S1,
    S2,
}

impl Stage {
    pub fn as_str(&self) -> &'static str {
        match self {
            Stage::S1 => "S1",
            Stage::S2 => "S2",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClassGroup {
    Own(usize),
    Aggregate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassGrouping {
    pub groups: Vec<ClassGroup>,
}

impl ClassGrouping {
    pub fn identity(class_count: usize) -> Self {
        Self {
            groups: (0..class_count).map(ClassGroup::Own).collect(),
        }
    }

    /// Moves the listed classes into the aggregate group.
    pub fn aggregate(&self, classes: &[usize]) -> Self {
        let mut groups = self.groups.clone();
        for &c in classes {
            groups[c] = ClassGroup::Aggregate;
        }
        Self { groups }
    }

    pub fn aggregated_classes(&self) -> Vec<usize> {
        self.groups
            .iter()
            .enumerate()
            .filter(|(_, g)| **g == ClassGroup::Aggregate)
            .map(|(c, _)| c)
            .collect()
    }
}

/// One GMM fit and the group it was fit on; `fit` is `None` when fitting
/// failed and `error` says why.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupFit {
    pub group: ClassGroup,
    pub fit: Option<Gmm1DFit>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub stage: Stage,
    pub is_clean: Vec<bool>,
    /// Similarity (stage 1) or discrepancy (stage 2).
    pub score: Vec<f64>,
    pub posterior_clean: Vec<f64>,
    pub class_grouping: Option<ClassGrouping>,
    pub fits: Vec<GroupFit>,
}

impl Partition {
    /// Everything marked clean with certainty; used when stage 1 is bypassed.
    pub fn all_clean(n: usize, stage: Stage) -> Self {
        Self {
            stage,
            is_clean: vec![true; n],
            score: vec![1.0; n],
            posterior_clean: vec![1.0; n],
            class_grouping: None,
            fits: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.is_clean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.is_clean.is_empty()
    }

    pub fn clean_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.is_clean[i]).collect()
    }

    pub fn noisy_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.is_clean[i]).collect()
    }

    pub fn clean_count(&self) -> usize {
        self.is_clean.iter().filter(|&&c| c).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage1Config {
    pub theta: f64,
    pub theta_agg: f64,
    pub membership: MembershipSource,
}

impl Default for Stage1Config {
    fn default() -> Self {
        Self {
            theta: 0.5,
            theta_agg: 0.4,
            membership: MembershipSource::NoisyLabel,
        }
    }
}

/// Normalizes every row to unit length.
pub fn normalize_rows(features: &DenseMatrix) -> Result<DenseMatrix> {
    let mut out = DenseMatrix::zeros(features.rows(), features.cols());
    for i in 0..features.rows() {
        let u = linalg::l2_normalize(features.row(i))?;
        out.row_mut(i).copy_from_slice(&u);
    }
    Ok(out)
}

/// `O_c = Σ f̂_i / ‖Σ f̂_i‖` over the members of each class.
pub fn compute_centers(
    features: &DenseMatrix,
    membership_labels: &[usize],
    class_count: usize,
    source: MembershipSource,
) -> Result<ClassCenters> {
    let normalized = normalize_rows(features)?;
    centers_from_normalized(&normalized, membership_labels, class_count, source)
}

pub fn centers_from_normalized(
    normalized: &DenseMatrix,
    membership_labels: &[usize],
    class_count: usize,
    source: MembershipSource,
) -> Result<ClassCenters> {
    if membership_labels.len() != normalized.rows() {
        return Err(Error::Dimension {
            context: "membership labels",
            expected: normalized.rows(),
            got: membership_labels.len(),
        });
    }
    let mut sums = DenseMatrix::zeros(class_count, normalized.cols());
    let mut counts = vec![0usize; class_count];
    for (i, &y) in membership_labels.iter().enumerate() {
        counts[y] += 1;
        for (s, v) in sums.row_mut(y).iter_mut().zip(normalized.row(i)) {
            *s += v;
        }
    }
    let mut centers = Vec::with_capacity(class_count);
    for (c, &count) in counts.iter().enumerate() {
        if count == 0 {
            centers.push(None);
            continue;
        }
        let center = linalg::l2_normalize(sums.row(c)).map_err(|_| Error::DegenerateCenter { class: c })?;
        centers.push(Some(center));
    }
    Ok(ClassCenters {
        centers,
        member_counts: counts,
        membership_source: source,
    })
}

/// `S_i = f̂_i · O_{ȳ_i}` for already-normalized features.
pub fn compute_similarities(normalized: &DenseMatrix, centers: &ClassCenters, noisy_labels: &[usize]) -> Result<Vec<f64>> {
    noisy_labels
        .iter()
        .enumerate()
        .map(|(i, &y)| Ok(linalg::dot(normalized.row(i), centers.get(y)?)))
        .collect()
}

/// Outcome of one per-class fit, as consumed by [`aggregate_rare_classes`].
pub type ClassFitOutcome = Result<Vec<PosteriorRow>>;

/// Average binary entropy of a class's posteriors.
pub fn class_entropy(posteriors: &[PosteriorRow]) -> f64 {
    if posteriors.is_empty() {
        return 0.0;
    }
    posteriors.iter().map(PosteriorRow::entropy).sum::<f64>() / posteriors.len() as f64
}

/// Pools classes whose average posterior entropy exceeds `theta_agg`, along
/// with classes whose fit failed.
pub fn aggregate_rare_classes(per_class: &[ClassFitOutcome], theta_agg: f64) -> ClassGrouping {
    let rare: Vec<usize> = per_class
        .iter()
        .enumerate()
        .filter(|(_, outcome)| match outcome {
            Ok(rows) => class_entropy(rows) > theta_agg,
            Err(_) => true,
        })
        .map(|(c, _)| c)
        .collect();
    ClassGrouping::identity(per_class.len()).aggregate(&rare)
}

/// Fewest members a class needs for its own GMM.
pub const MIN_CLASS_FIT: usize = 8;

fn fit_group(scores: &[f64]) -> Result<(Gmm1DFit, Vec<f64>)> {
    if scores.len() < MIN_CLASS_FIT {
        return Err(Error::InsufficientData {
            needed: MIN_CLASS_FIT,
            got: scores.len(),
        });
    }
    let normalized = gmm::min_max_normalize(scores)?;
    let (fit, _) = gmm::fit_gmm1d_with(&normalized, EmOptions::default())?;
    Ok((fit, normalized))
}

/// Steps 1 and 2: features, centers, similarities, per-class GMMs with
/// aggregation, and thresholding at `theta` with the larger-mean component
/// as clean.
pub fn stage1_partition(
    model: &ModelParams,
    features_in: &DenseMatrix,
    noisy_labels: &[usize],
    class_count: usize,
    cfg: &Stage1Config,
) -> Result<Partition> {
    gmm::check_threshold(cfg.theta)?;
    let fwd = model.forward(features_in)?;
    let normalized = normalize_rows(fwd.features())?;
    let membership: Vec<usize> = match cfg.membership {
        MembershipSource::NoisyLabel => noisy_labels.to_vec(),
        MembershipSource::PredictedLabel => {
            let p = fwd.ensemble_probs();
            p.iter_rows().map(linalg::argmax).collect()
        }
    };
    let centers = centers_from_normalized(&normalized, &membership, class_count, cfg.membership)?;
    let similarities = compute_similarities(&normalized, &centers, noisy_labels)?;
    partition_similarities(&similarities, noisy_labels, class_count, cfg)
}

/// The GMM half of stage 1, on precomputed similarities.
pub fn partition_similarities(
    similarities: &[f64],
    noisy_labels: &[usize],
    class_count: usize,
    cfg: &Stage1Config,
) -> Result<Partition> {
    let n = similarities.len();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); class_count];
    for (i, &y) in noisy_labels.iter().enumerate() {
        members[y].push(i);
    }

    let mut per_class: Vec<ClassFitOutcome> = Vec::with_capacity(class_count);
    let mut per_class_fit: Vec<Option<Gmm1DFit>> = Vec::with_capacity(class_count);
    let mut normalized_scores = vec![0.0; n];
    for idx in &members {
        let scores: Vec<f64> = idx.iter().map(|&i| similarities[i]).collect();
        // normalized scores are still needed for pooling when the fit fails
        if let Ok(norm) = gmm::min_max_normalize(&scores) {
            for (&i, v) in idx.iter().zip(norm) {
                normalized_scores[i] = v;
            }
        }
        match fit_group(&scores) {
            Ok((fit, norm)) => {
                per_class.push(Ok(norm.iter().map(|&v| fit.posterior(v)).collect()));
                per_class_fit.push(Some(fit));
            }
            Err(e) => {
                per_class.push(Err(e));
                per_class_fit.push(None);
            }
        }
    }

    let grouping = aggregate_rare_classes(&per_class, cfg.theta_agg);
    let mut posterior = vec![0.0; n];
    let mut fits = Vec::new();
    for (c, outcome) in per_class.iter().enumerate() {
        if grouping.groups[c] != ClassGroup::Own(c) {
            continue;
        }
        let rows = outcome.as_ref().expect("own groups have successful fits");
        for (&i, row) in members[c].iter().zip(rows) {
            posterior[i] = row.of(CleanComponent::LargerMean);
        }
        fits.push(GroupFit {
            group: ClassGroup::Own(c),
            fit: per_class_fit[c].clone(),
            error: None,
        });
    }

    let pooled_classes = grouping.aggregated_classes();
    if !pooled_classes.is_empty() {
        let idx: Vec<usize> = pooled_classes.iter().flat_map(|&c| members[c].iter().copied()).collect();
        let values: Vec<f64> = idx.iter().map(|&i| normalized_scores[i]).collect();
        match gmm::fit_gmm1d_with(&values, EmOptions::default()) {
            Ok((fit, _)) => {
                for (&i, &v) in idx.iter().zip(&values) {
                    posterior[i] = fit.posterior(v).of(CleanComponent::LargerMean);
                }
                fits.push(GroupFit {
                    group: ClassGroup::Aggregate,
                    fit: Some(fit),
                    error: None,
                });
            }
            Err(e) => {
                // nothing to split on: the pooled samples go to the noisy set
                fits.push(GroupFit {
                    group: ClassGroup::Aggregate,
                    fit: None,
                    error: Some(alloc::format!("{e}")),
                });
            }
        }
    }
    if fits.iter().all(|f| f.fit.is_none()) {
        return Err(Error::DegenerateData);
    }

    Ok(Partition {
        stage: Stage::S1,
        is_clean: posterior.iter().map(|&p| p > cfg.theta).collect(),
        score: similarities.to_vec(),
        posterior_clean: posterior,
        class_grouping: Some(grouping),
        fits,
    })
}
