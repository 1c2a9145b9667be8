//! Labeled datasets and the Gaussian-blob generator used as a desk-scale
//! stand-in for image benchmarks.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::rng::Rng;

/// Minimum per-class sample count the generator accepts.
pub const MIN_CLASS_SAMPLES: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub features: DenseMatrix,
    /// Ground truth; never shown to the selection or training code paths.
    pub true_labels: Vec<usize>,
    pub noisy_labels: Vec<usize>,
    pub ids: Vec<u64>,
    pub class_count: usize,
}

impl LabeledDataset {
    pub fn new(
        features: DenseMatrix,
        true_labels: Vec<usize>,
        noisy_labels: Vec<usize>,
        ids: Vec<u64>,
        class_count: usize,
    ) -> Result<Self> {
        let n = features.rows();
        for (ctx, len) in [
            ("true label count", true_labels.len()),
            ("noisy label count", noisy_labels.len()),
            ("id count", ids.len()),
        ] {
            if len != n {
                return Err(Error::Dimension {
                    context: ctx,
                    expected: n,
                    got: len,
                });
            }
        }
        if class_count < 2 {
            return Err(Error::config("class_count", "need at least 2 classes"));
        }
        if let Some(&bad) = true_labels.iter().chain(&noisy_labels).find(|&&y| y >= class_count) {
            return Err(Error::config("labels", alloc::format!("label {bad} outside [0, {class_count})")));
        }
        Ok(Self {
            features,
            true_labels,
            noisy_labels,
            ids,
            class_count,
        })
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    /// Fraction of samples whose noisy label differs from the truth.
    pub fn noise_rate(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.flip_count() as f64 / self.len() as f64
    }

    pub fn flip_count(&self) -> usize {
        self.true_labels
            .iter()
            .zip(&self.noisy_labels)
            .filter(|(t, n)| t != n)
            .count()
    }

    /// Per-sample ground-truth cleanliness.
    pub fn is_truly_clean(&self) -> Vec<bool> {
        self.true_labels
            .iter()
            .zip(&self.noisy_labels)
            .map(|(t, n)| t == n)
            .collect()
    }

    pub fn class_counts(&self, labels: &[usize]) -> Vec<usize> {
        let mut counts = vec![0; self.class_count];
        for &y in labels {
            counts[y] += 1;
        }
        counts
    }

    /// Mean feature vector of each class under `labels`.
    pub fn class_means(&self, labels: &[usize]) -> DenseMatrix {
        let mut means = DenseMatrix::zeros(self.class_count, self.dim());
        let counts = self.class_counts(labels);
        for (i, &y) in labels.iter().enumerate() {
            for (m, x) in means.row_mut(y).iter_mut().zip(self.features.row(i)) {
                *m += x;
            }
        }
        for (c, &k) in counts.iter().enumerate() {
            if k > 0 {
                for m in means.row_mut(c) {
                    *m /= k as f64;
                }
            }
        }
        means
    }

    /// Copy with replaced noisy labels.
    pub fn with_noisy_labels(&self, noisy_labels: Vec<usize>) -> Self {
        Self {
            noisy_labels,
            ..self.clone()
        }
    }
}

/// Gaussian blob geometry: one center per class and an isotropic spread.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobModel {
    pub centers: DenseMatrix,
    pub cluster_std: f64,
}

/// How [`BlobModel::random`] places class centers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CenterLayout {
    /// Every coordinate drawn from `N(0, center_spread²)`.
    Gaussian,
    /// Random orthonormal directions scaled to norm `center_spread`, so all
    /// pairs are equally far apart. Needs `class_count <= dim`.
    #[default]
    Equidistant,
}

/// Parameters for [`make_blobs`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobSpec {
    pub n_per_class: usize,
    pub class_count: usize,
    pub dim: usize,
    /// Per-coordinate standard deviation of Gaussian centers, or the norm
    /// of equidistant ones.
    pub center_spread: f64,
    pub cluster_std: f64,
    /// Class proportions of the `n_per_class × class_count` samples; empty
    /// means balanced.
    pub imbalance_ratios: Vec<f64>,
    #[serde(default)]
    pub center_layout: CenterLayout,
}

impl BlobSpec {
    pub fn total(&self) -> usize {
        self.n_per_class * self.class_count
    }

    /// Per-class counts; largest-remainder rounding keeps the total exact.
    pub fn class_sizes(&self) -> Result<Vec<usize>> {
        if self.class_count < 2 {
            return Err(Error::config("data.class_count", "need at least 2 classes"));
        }
        if self.imbalance_ratios.is_empty() {
            return Ok(vec![self.n_per_class; self.class_count]);
        }
        if self.imbalance_ratios.len() != self.class_count {
            return Err(Error::config(
                "data.imbalance_ratios",
                alloc::format!("expected {} ratios", self.class_count),
            ));
        }
        if self.imbalance_ratios.iter().any(|r| !(*r >= 0.0) || !r.is_finite()) {
            return Err(Error::config("data.imbalance_ratios", "ratios must be nonnegative"));
        }
        let sum: f64 = self.imbalance_ratios.iter().sum();
        if sum <= 0.0 {
            return Err(Error::config("data.imbalance_ratios", "ratios must not all be zero"));
        }
        let total = self.total();
        let exact: Vec<f64> = self
            .imbalance_ratios
            .iter()
            .map(|r| r / sum * total as f64)
            .collect();
        let mut sizes: Vec<usize> = exact.iter().map(|e| crate::math::floor(*e) as usize).collect();
        let mut order: Vec<usize> = (0..sizes.len()).collect();
        order.sort_by(|&a, &b| {
            let ra = exact[a] - sizes[a] as f64;
            let rb = exact[b] - sizes[b] as f64;
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        let short = total - sizes.iter().sum::<usize>();
        for &c in order.iter().take(short) {
            sizes[c] += 1;
        }
        Ok(sizes)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::config("data.dim", "must be positive"));
        }
        if self.center_layout == CenterLayout::Equidistant && self.class_count > self.dim {
            return Err(Error::config("data.center_layout", "equidistant centers need class_count <= dim"));
        }
        if !(self.cluster_std >= 0.0) || !(self.center_spread >= 0.0) {
            return Err(Error::config("data.cluster_std", "spreads must be nonnegative"));
        }
        Ok(())
    }
}

impl BlobModel {
    pub fn random(spec: &BlobSpec, rng: &mut Rng) -> Result<Self> {
        spec.validate()?;
        let mut centers = DenseMatrix::zeros(spec.class_count, spec.dim);
        for v in centers.data_mut() {
            *v = StandardNormal.sample(rng);
        }
        if spec.center_layout == CenterLayout::Equidistant {
            for c in 0..spec.class_count {
                for prev in 0..c {
                    let proj = crate::linalg::dot(centers.row(c), centers.row(prev));
                    let basis = centers.row(prev).to_vec();
                    for (v, b) in centers.row_mut(c).iter_mut().zip(&basis) {
                        *v -= proj * b;
                    }
                }
                let unit = crate::linalg::l2_normalize(centers.row(c))?;
                centers.row_mut(c).copy_from_slice(&unit);
            }
        }
        for v in centers.data_mut() {
            *v *= spec.center_spread;
        }
        Ok(Self {
            centers,
            cluster_std: spec.cluster_std,
        })
    }

    /// Draws `sizes[c]` samples around each center, shuffled, with ids
    /// starting at `first_id`. Noisy labels start equal to the truth.
    pub fn sample(&self, sizes: &[usize], first_id: u64, rng: &mut Rng) -> Result<LabeledDataset> {
        let classes = self.centers.rows();
        if sizes.len() != classes {
            return Err(Error::Dimension {
                context: "class sizes",
                expected: classes,
                got: sizes.len(),
            });
        }
        let mut labels: Vec<usize> = sizes
            .iter()
            .enumerate()
            .flat_map(|(c, &k)| core::iter::repeat_n(c, k))
            .collect();
        // Fisher-Yates so that sample order carries no class information
        for i in (1..labels.len()).rev() {
            let j = rng.random_range(0..=i);
            labels.swap(i, j);
        }
        let dim = self.centers.cols();
        let mut features = DenseMatrix::zeros(labels.len(), dim);
        for (i, &y) in labels.iter().enumerate() {
            for (x, &m) in features.row_mut(i).iter_mut().zip(self.centers.row(y)) {
                let z: f64 = StandardNormal.sample(rng);
                *x = m + self.cluster_std * z;
            }
        }
        let ids = (0..labels.len() as u64).map(|i| first_id + i).collect();
        LabeledDataset::new(features, labels.clone(), labels, ids, classes)
    }
}

/// Generates a clean blob dataset and the geometry it came from.
pub fn make_blobs(spec: &BlobSpec, rng: &mut Rng) -> Result<(LabeledDataset, BlobModel)> {
    let sizes = spec.class_sizes()?;
    if let Some((c, &k)) = sizes.iter().enumerate().find(|(_, &k)| k < MIN_CLASS_SAMPLES) {
        return Err(Error::config(
            "data.n_per_class",
            alloc::format!("class {c} would have {k} samples, need at least {MIN_CLASS_SAMPLES}"),
        ));
    }
    let model = BlobModel::random(spec, rng)?;
    let data = model.sample(&sizes, 0, rng)?;
    Ok((data, model))
}
