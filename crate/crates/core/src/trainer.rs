//! Warm-up and the per-epoch selection/training loop.
//!
//! Each epoch after warm-up runs four steps: stage-1 partition, head
//! discrepancy maximization with the stage-2 partition, and one pass of
//! semi-supervised training with the extractor-side consistency term.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::loss::{self, CrossEntropy, Discrepancy, Route, SquaredError};
use crate::metrics;
use crate::mixmatch::{self, MixMatchConfig};
use crate::nn::{self, ModelParams, ModelShape, Objective, OptimState, ParamGroups, Term};
use crate::rng::{Rng, SeedStreams, Stream};
use crate::stage1::{self, GroupFit, MembershipSource, Partition, Stage, Stage1Config};
use crate::stage2::{self, ClassFrequencies, ConsistencyReport, ConsistencyScore, Stage2Config};

/// Which parts of the selection pipeline run after warm-up.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Plain cross-entropy on every noisy label.
    CrossEntropy,
    Stage1Only,
    /// Stage 1 bypassed: the whole dataset is the first clean set.
    Stage2Only,
    Full,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::CrossEntropy, Method::Stage1Only, Method::Stage2Only, Method::Full];

    pub fn uses_stage1(self) -> bool {
        matches!(self, Method::Stage1Only | Method::Full)
    }

    pub fn uses_stage2(self) -> bool {
        matches!(self, Method::Stage2Only | Method::Full)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Method::CrossEntropy => "cross-entropy",
            Method::Stage1Only => "stage1-only",
            Method::Stage2Only => "stage2-only",
            Method::Full => "full",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub method: Method,
    pub epochs: usize,
    pub warmup_epochs: usize,
    pub learning_rate: f64,
    /// Epoch at which the learning rate is multiplied by `lr_decay_factor`.
    pub lr_decay_epoch: usize,
    pub lr_decay_factor: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub theta: f64,
    pub theta_agg: f64,
    pub membership: MembershipSource,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub lambda_u: f64,
    /// Epochs over which `lambda_u` ramps up linearly; 0 disables the ramp.
    pub lambda_u_ramp_epochs: usize,
    pub n_max: usize,
    pub temperature: f64,
    pub alpha: f64,
    pub k_views: usize,
    pub jitter: f64,
    pub supervised_guard: bool,
    pub consistency_score: ConsistencyScore,
    pub stage2_per_class: bool,
    pub hidden: Vec<usize>,
    pub feature_dim: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            method: Method::Full,
            epochs: 60,
            warmup_epochs: 5,
            learning_rate: 0.02,
            lr_decay_epoch: 30,
            lr_decay_factor: 0.1,
            momentum: 0.9,
            weight_decay: 5e-4,
            batch_size: 64,
            theta: 0.5,
            theta_agg: 0.4,
            membership: MembershipSource::NoisyLabel,
            lambda_min: 0.1,
            lambda_max: 0.1,
            lambda_u: 25.0,
            lambda_u_ramp_epochs: 10,
            n_max: 50,
            temperature: 0.5,
            alpha: 4.0,
            k_views: 2,
            jitter: 0.05,
            supervised_guard: false,
            consistency_score: ConsistencyScore::Plain,
            stage2_per_class: true,
            hidden: vec![32, 32],
            feature_dim: 16,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |field: &'static str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(field, "must be positive"))
            }
        };
        let nonneg = |field: &'static str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(field, "must be nonnegative"))
            }
        };
        if self.epochs == 0 {
            return Err(Error::config("train.epochs", "must be positive"));
        }
        if self.warmup_epochs >= self.epochs {
            return Err(Error::config("train.warmup_epochs", "must be smaller than epochs"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("train.batch_size", "must be positive"));
        }
        positive("train.learning_rate", self.learning_rate)?;
        positive("train.lr_decay_factor", self.lr_decay_factor)?;
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("train.momentum", "must lie in [0, 1)"));
        }
        nonneg("train.weight_decay", self.weight_decay)?;
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(Error::config("train.theta", "must lie in (0, 1)"));
        }
        nonneg("train.theta_agg", self.theta_agg)?;
        nonneg("train.lambda_min", self.lambda_min)?;
        nonneg("train.lambda_max", self.lambda_max)?;
        nonneg("train.lambda_u", self.lambda_u)?;
        positive("train.temperature", self.temperature)?;
        positive("train.alpha", self.alpha)?;
        nonneg("train.jitter", self.jitter)?;
        if self.k_views == 0 {
            return Err(Error::config("train.k_views", "must be at least 1"));
        }
        if self.feature_dim == 0 || self.hidden.contains(&0) {
            return Err(Error::config("train.hidden", "layer widths must be positive"));
        }
        Ok(())
    }

    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        if epoch >= self.lr_decay_epoch {
            self.learning_rate * self.lr_decay_factor
        } else {
            self.learning_rate
        }
    }

    /// `lambda_u` after the linear ramp, for an epoch after warm-up.
    pub fn lambda_u_at(&self, epoch: usize) -> f64 {
        if self.lambda_u_ramp_epochs == 0 {
            return self.lambda_u;
        }
        let done = (epoch + 1).saturating_sub(self.warmup_epochs) as f64;
        self.lambda_u * (done / self.lambda_u_ramp_epochs as f64).min(1.0)
    }

    pub fn model_shape(&self, input_dim: usize, class_count: usize) -> ModelShape {
        ModelShape {
            input_dim,
            hidden: self.hidden.clone(),
            feature_dim: self.feature_dim,
            class_count,
        }
    }

    pub fn stage1(&self) -> Stage1Config {
        Stage1Config {
            theta: self.theta,
            theta_agg: self.theta_agg,
            membership: self.membership,
        }
    }

    pub fn stage2(&self) -> Stage2Config {
        Stage2Config {
            lambda_min: self.lambda_min,
            n_max: self.n_max,
            batch_size: self.batch_size,
            theta: self.theta,
            supervised_guard: self.supervised_guard,
            score: self.consistency_score,
            per_class: self.stage2_per_class,
        }
    }

    pub fn mixmatch(&self) -> MixMatchConfig {
        MixMatchConfig {
            temperature: self.temperature,
            alpha: self.alpha,
            k: self.k_views,
            jitter: self.jitter,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    Warmup,
    CrossEntropy,
    Select,
}

/// Loss contributions of one epoch, averaged over its steps. `loss_u` and
/// the two consistency terms include their λ weights.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossComponents {
    pub loss_x: f64,
    pub loss_u: f64,
    pub loss_min: f64,
    pub loss_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub phase: Phase,
    pub learning_rate: f64,
    pub lambda_u: f64,
    pub test_acc_head1: f64,
    pub test_acc_head2: f64,
    pub test_acc: f64,
    pub auc_s1: Option<f64>,
    pub auc_s2: Option<f64>,
    pub n_s1: Option<usize>,
    pub n_s2: Option<usize>,
    pub precision_s1: Option<f64>,
    pub precision_s2: Option<f64>,
    pub class_dist_s1: Option<Vec<f64>>,
    pub class_dist_s2: Option<Vec<f64>>,
    pub losses: LossComponents,
    pub fits_s1: Vec<GroupFit>,
    pub fits_s2: Vec<GroupFit>,
    pub notes: Vec<String>,
}

impl EpochRecord {
    fn new(epoch: usize, phase: Phase, learning_rate: f64) -> Self {
        Self {
            epoch,
            phase,
            learning_rate,
            lambda_u: 0.0,
            test_acc_head1: 0.0,
            test_acc_head2: 0.0,
            test_acc: 0.0,
            auc_s1: None,
            auc_s2: None,
            n_s1: None,
            n_s2: None,
            precision_s1: None,
            precision_s2: None,
            class_dist_s1: None,
            class_dist_s2: None,
            losses: LossComponents::default(),
            fits_s1: Vec::new(),
            fits_s2: Vec::new(),
            notes: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub method: Method,
    pub seed: u64,
    pub train_size: usize,
    pub test_size: usize,
    pub noise_rate: f64,
    pub epochs: Vec<EpochRecord>,
}

impl RunReport {
    pub fn final_test_accuracy(&self) -> f64 {
        self.epochs.last().map_or(0.0, |e| e.test_acc)
    }

    /// Test accuracy at the end of warm-up.
    pub fn warmup_test_accuracy(&self) -> Option<f64> {
        self.epochs.iter().rev().find(|e| e.phase == Phase::Warmup).map(|e| e.test_acc)
    }

    fn mean_of(&self, f: impl Fn(&EpochRecord) -> Option<f64>) -> Option<f64> {
        let v: Vec<f64> = self.epochs.iter().filter_map(f).collect();
        if v.is_empty() {
            None
        } else {
            Some(v.iter().sum::<f64>() / v.len() as f64)
        }
    }

    pub fn mean_auc_s1(&self) -> Option<f64> {
        self.mean_of(|e| e.auc_s1)
    }

    pub fn mean_auc_s2(&self) -> Option<f64> {
        self.mean_of(|e| e.auc_s2)
    }

    pub fn mean_precision_s1(&self) -> Option<f64> {
        self.mean_of(|e| e.precision_s1)
    }

    pub fn mean_precision_s2(&self) -> Option<f64> {
        self.mean_of(|e| e.precision_s2)
    }
}

/// What the loop exposes to observers after each selection epoch.
pub struct EpochSnapshot<'a> {
    pub epoch: usize,
    pub s1: &'a Partition,
    pub s2: &'a Partition,
    pub consistency: Option<&'a ConsistencyReport>,
    pub model: &'a ModelParams,
}

/// One shuffled pass of cross-entropy on both heads over `indices`.
/// Returns the mean minibatch loss.
pub fn cross_entropy_epoch(
    model: &mut ModelParams,
    optim: &mut OptimState,
    features: &DenseMatrix,
    labels: &[usize],
    indices: &[usize],
    batch_size: usize,
    rng: &mut Rng,
) -> Result<f64> {
    let mut order = indices.to_vec();
    order.shuffle(rng);
    let classes = model.class_count();
    let mut total = 0.0;
    let mut steps = 0;
    for chunk in order.chunks(batch_size.max(1)) {
        let x = features.select_rows(chunk);
        let y: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
        let ce = CrossEntropy::from_labels(&y, classes);
        let v = nn::backward_step(
            model,
            optim,
            &[Term {
                batch: &x,
                objectives: &[&ce],
            }],
            ParamGroups::ALL,
        )?;
        total += v[0];
        steps += 1;
    }
    Ok(if steps == 0 { 0.0 } else { total / steps as f64 })
}

/// Warm-up: cross-entropy on all noisy labels for `epochs` passes.
pub fn warmup(
    model: &mut ModelParams,
    optim: &mut OptimState,
    dataset: &LabeledDataset,
    epochs: usize,
    batch_size: usize,
    rng: &mut Rng,
) -> Result<()> {
    let all: Vec<usize> = (0..dataset.len()).collect();
    for _ in 0..epochs {
        cross_entropy_epoch(model, optim, &dataset.features, &dataset.noisy_labels, &all, batch_size, rng)?;
    }
    Ok(())
}

/// Batch-level pieces of the semi-supervised objective, kept separate so the
/// same construction feeds both training and gradient checks.
pub struct SemiSupervisedBatch {
    pub mixed: mixmatch::MixedBatch,
    pub supervised: CrossEntropy,
    pub unsupervised: SquaredError,
    pub raw: DenseMatrix,
    pub consistency: Discrepancy,
}

impl SemiSupervisedBatch {
    /// Builds the objective `L_X + λ_U·L_U + λ_max·mean D*` for one labeled
    /// and one unlabeled batch. The consistency term reaches only the
    /// extractor.
    #[allow(clippy::too_many_arguments)]
    pub fn build(
        model: &ModelParams,
        labeled: &DenseMatrix,
        labels: &[usize],
        unlabeled: &DenseMatrix,
        unlabeled_noisy_labels: &[usize],
        freqs: &ClassFrequencies,
        lambda_u: f64,
        lambda_max: f64,
        mix: &MixMatchConfig,
        rng: &mut Rng,
    ) -> Result<Self> {
        let classes = model.class_count();
        let targets = loss::one_hot(labels, classes);
        let mixed = mixmatch::mixmatch_lite(model, labeled, &targets, unlabeled, mix, rng)?;
        let nl = mixed.n_labeled;
        let total = mixed.inputs.rows();
        let split = |range: core::ops::Range<usize>| {
            let rows: Vec<usize> = range.collect();
            mixed.targets.select_rows(&rows)
        };
        let supervised = CrossEntropy {
            targets: split(0..nl),
            rows: 0..nl,
            scale: 1.0,
        };
        let unsupervised = SquaredError {
            targets: split(nl..total),
            rows: nl..total,
            scale: lambda_u,
        };
        let mut raw_data = labeled.data().to_vec();
        raw_data.extend_from_slice(unlabeled.data());
        let raw = DenseMatrix::new(labeled.rows() + unlabeled.rows(), labeled.cols(), raw_data)?;
        let mut weights = freqs.per_sample(labels);
        weights.extend(freqs.per_sample(unlabeled_noisy_labels));
        let consistency = Discrepancy {
            weights,
            scale: lambda_max,
            route: Route::ExtractorOnly,
        };
        Ok(Self {
            mixed,
            supervised,
            unsupervised,
            raw,
            consistency,
        })
    }

    /// Evaluates `f` on the term list of this batch.
    pub fn with_terms<T>(&self, f: impl FnOnce(&[Term<'_>]) -> T) -> T {
        let mixed_obj: [&dyn Objective; 2] = [&self.supervised, &self.unsupervised];
        let raw_obj: [&dyn Objective; 1] = [&self.consistency];
        let skip_raw = self.consistency.scale == 0.0;
        let terms = [
            Term {
                batch: &self.mixed.inputs,
                objectives: &mixed_obj,
            },
            Term {
                batch: &self.raw,
                objectives: &raw_obj,
            },
        ];
        f(if skip_raw { &terms[..1] } else { &terms[..] })
    }
}

/// Step 4: one pass of `L_X + λ_U·L_U` plus the extractor-side consistency
/// term, with `S²_clean` labeled and `S²_noisy` unlabeled.
#[allow(clippy::too_many_arguments)]
pub fn semi_supervised_epoch(
    model: &mut ModelParams,
    optim: &mut OptimState,
    dataset: &LabeledDataset,
    clean: &[usize],
    noisy: &[usize],
    freqs: &ClassFrequencies,
    lambda_u: f64,
    lambda_max: f64,
    mix: &MixMatchConfig,
    batch_size: usize,
    shuffle_rng: &mut Rng,
    mix_rng: &mut Rng,
) -> Result<LossComponents> {
    if clean.is_empty() {
        return Err(Error::EmptyCleanSet);
    }
    let iterations = dataset.len().div_ceil(batch_size.max(1));
    let mut clean_cycle = Cycle::new(clean, shuffle_rng);
    let mut noisy_cycle = Cycle::new(noisy, shuffle_rng);
    let mut sums = LossComponents::default();
    for _ in 0..iterations {
        let xi = clean_cycle.next(batch_size, shuffle_rng);
        let ui = noisy_cycle.next(batch_size, shuffle_rng);
        let x = dataset.features.select_rows(&xi);
        let u = dataset.features.select_rows(&ui);
        let labels: Vec<usize> = xi.iter().map(|&i| dataset.noisy_labels[i]).collect();
        let u_labels: Vec<usize> = ui.iter().map(|&i| dataset.noisy_labels[i]).collect();
        let batch = SemiSupervisedBatch::build(model, &x, &labels, &u, &u_labels, freqs, lambda_u, lambda_max, mix, mix_rng)?;
        let values = batch.with_terms(|terms| nn::backward_step(model, optim, terms, ParamGroups::ALL))?;
        sums.loss_x += values[0];
        sums.loss_u += values[1];
        sums.loss_max += values.get(2).copied().unwrap_or(0.0);
    }
    let k = iterations.max(1) as f64;
    sums.loss_x /= k;
    sums.loss_u /= k;
    sums.loss_max /= k;
    Ok(sums)
}

/// Endless reshuffled walk over an index set.
struct Cycle {
    order: Vec<usize>,
    cursor: usize,
}

impl Cycle {
    fn new(indices: &[usize], rng: &mut Rng) -> Self {
        let mut order = indices.to_vec();
        order.shuffle(rng);
        Self { order, cursor: 0 }
    }

    fn next(&mut self, n: usize, rng: &mut Rng) -> Vec<usize> {
        if self.order.is_empty() {
            return Vec::new();
        }
        let n = n.min(self.order.len());
        if self.cursor + n > self.order.len() {
            self.order.shuffle(rng);
            self.cursor = 0;
        }
        let out = self.order[self.cursor..self.cursor + n].to_vec();
        self.cursor += n;
        out
    }
}

fn test_accuracies(model: &ModelParams, test: &LabeledDataset) -> Result<(f64, f64, f64)> {
    let f = model.forward(&test.features)?;
    Ok((
        metrics::accuracy(&f.probs1, &test.true_labels),
        metrics::accuracy(&f.probs2, &test.true_labels),
        metrics::accuracy(&f.ensemble_probs(), &test.true_labels),
    ))
}

/// Final state of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedRun {
    pub report: RunReport,
    pub model: ModelParams,
    pub optim: OptimState,
}

/// Runs warm-up and the selection loop. `train.true_labels` feed only the
/// report's identification metrics; `test` is scored on its true labels.
pub fn run_training(
    train: &LabeledDataset,
    test: &LabeledDataset,
    cfg: &TrainConfig,
    observer: &mut dyn FnMut(&EpochSnapshot<'_>),
) -> Result<RunReport> {
    train_model(train, test, cfg, observer).map(|r| r.report)
}

pub fn train_model(
    train: &LabeledDataset,
    test: &LabeledDataset,
    cfg: &TrainConfig,
    observer: &mut dyn FnMut(&EpochSnapshot<'_>),
) -> Result<TrainedRun> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::config("data", "training set is empty"));
    }
    let streams = SeedStreams::new(cfg.seed);
    let shape = cfg.model_shape(train.dim(), train.class_count);
    let mut model = ModelParams::init(&shape, &mut streams.stream(Stream::ModelInit), &mut streams.stream(Stream::Head2Init))?;
    let mut optim = OptimState::new(&model, cfg.learning_rate, cfg.momentum, cfg.weight_decay)?;
    let mut shuffle_rng = streams.stream(Stream::Shuffle);
    let mut mix_rng = streams.stream(Stream::MixMatch);
    let mut consistency_rng = streams.stream(Stream::Consistency);

    let n = train.len();
    let all: Vec<usize> = (0..n).collect();
    let freqs = stage2::class_frequencies(&train.noisy_labels, train.class_count);
    let truly_clean = train.is_truly_clean();
    let s1_cfg = cfg.stage1();
    let s2_cfg = cfg.stage2();
    let mix_cfg = cfg.mixmatch();
    let mut previous_s1: Option<Partition> = None;
    let mut epochs = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        optim.learning_rate = cfg.learning_rate_at(epoch);
        let phase = if epoch < cfg.warmup_epochs {
            Phase::Warmup
        } else if cfg.method == Method::CrossEntropy {
            Phase::CrossEntropy
        } else {
            Phase::Select
        };
        let mut rec = EpochRecord::new(epoch, phase, optim.learning_rate);

        if phase != Phase::Select {
            rec.losses.loss_x = cross_entropy_epoch(
                &mut model,
                &mut optim,
                &train.features,
                &train.noisy_labels,
                &all,
                cfg.batch_size,
                &mut shuffle_rng,
            )?;
        } else {
            // Steps 1-2
            let s1 = if cfg.method.uses_stage1() {
                match stage1::stage1_partition(&model, &train.features, &train.noisy_labels, train.class_count, &s1_cfg) {
                    Ok(p) => p,
                    Err(e) if e.is_numerical() => {
                        rec.notes.push(alloc::format!("stage 1 aborted ({e}); reusing previous partition"));
                        previous_s1.clone().unwrap_or_else(|| Partition::all_clean(n, Stage::S1))
                    }
                    Err(e) => return Err(e),
                }
            } else {
                Partition::all_clean(n, Stage::S1)
            };
            previous_s1 = Some(s1.clone());

            // Step 3
            let mut consistency = None;
            let s2 = if cfg.method.uses_stage2() && s1.clean_count() > 0 {
                let clean = s1.clean_indices();
                rec.losses.loss_min = stage2::maximize_head_discrepancy(
                    &mut model,
                    &mut optim,
                    train,
                    &clean,
                    &freqs,
                    &s2_cfg,
                    &mut consistency_rng,
                )?;
                let (d, d_star) = stage2::all_discrepancies(&model, &train.features, &train.noisy_labels, &freqs)?;
                consistency = Some(ConsistencyReport {
                    d: clean.iter().map(|&i| d[i]).collect(),
                    d_star: clean.iter().map(|&i| d_star[i]).collect(),
                    indices: clean,
                    n_max: s2_cfg.n_max,
                    lambda_min: s2_cfg.lambda_min,
                });
                let scores = match s2_cfg.score {
                    ConsistencyScore::Plain => d,
                    ConsistencyScore::Weighted => d_star,
                };
                let out = stage2::stage2_partition(&s1, &scores, &train.noisy_labels, &s2_cfg)?;
                if let Some(why) = out.fallback {
                    rec.notes.push(alloc::format!("stage 2 skipped: {why}"));
                }
                out.partition
            } else {
                if cfg.method.uses_stage2() {
                    rec.notes.push(String::from("stage 2 skipped: empty stage-1 clean set"));
                }
                Partition {
                    stage: Stage::S2,
                    ..s1.clone()
                }
            };

            // Step 4
            rec.lambda_u = cfg.lambda_u_at(epoch);
            let lambda_max = if cfg.method.uses_stage2() { cfg.lambda_max } else { 0.0 };
            let clean = s2.clean_indices();
            if clean.is_empty() {
                rec.notes.push(String::from("empty clean set; supervised pass on all labels"));
                rec.losses.loss_x = cross_entropy_epoch(
                    &mut model,
                    &mut optim,
                    &train.features,
                    &train.noisy_labels,
                    &all,
                    cfg.batch_size,
                    &mut shuffle_rng,
                )?;
            } else {
                let losses = semi_supervised_epoch(
                    &mut model,
                    &mut optim,
                    train,
                    &clean,
                    &s2.noisy_indices(),
                    &freqs,
                    rec.lambda_u,
                    lambda_max,
                    &mix_cfg,
                    cfg.batch_size,
                    &mut shuffle_rng,
                    &mut mix_rng,
                )?;
                rec.losses = LossComponents {
                    loss_min: rec.losses.loss_min,
                    ..losses
                };
            }

            rec.auc_s1 = metrics::auc(&s1.posterior_clean, &truly_clean).ok();
            rec.auc_s2 = metrics::auc(&s2.posterior_clean, &truly_clean).ok();
            rec.n_s1 = Some(s1.clean_count());
            rec.n_s2 = Some(s2.clean_count());
            rec.precision_s1 = metrics::precision(&s1.is_clean, &truly_clean);
            rec.precision_s2 = metrics::precision(&s2.is_clean, &truly_clean);
            rec.class_dist_s1 = metrics::class_distribution(&s1.is_clean, &train.noisy_labels, train.class_count).ok();
            rec.class_dist_s2 = metrics::class_distribution(&s2.is_clean, &train.noisy_labels, train.class_count).ok();
            rec.fits_s1 = s1.fits.clone();
            rec.fits_s2 = s2.fits.clone();
            observer(&EpochSnapshot {
                epoch,
                s1: &s1,
                s2: &s2,
                consistency: consistency.as_ref(),
                model: &model,
            });
        }

        if !model.is_finite() {
            return Err(Error::NonFinite { term: "model parameters" });
        }
        let (a1, a2, a) = test_accuracies(&model, test)?;
        rec.test_acc_head1 = a1;
        rec.test_acc_head2 = a2;
        rec.test_acc = a;
        epochs.push(rec);
    }

    let report = RunReport {
        method: cfg.method,
        seed: cfg.seed,
        train_size: n,
        test_size: test.len(),
        noise_rate: train.noise_rate(),
        epochs,
    };
    Ok(TrainedRun { report, model, optim })
}
