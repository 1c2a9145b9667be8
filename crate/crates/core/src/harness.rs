//! Experiment presets: data, noise and training settings plus seeds.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::{BlobModel, BlobSpec, CenterLayout, LabeledDataset};
use crate::error::{Error, Result};
use crate::noise::{self, NoiseKind, NoiseSpec, ProbeConfig};
use crate::rng::{SeedStreams, Stream};
use crate::trainer::{self, EpochSnapshot, Method, RunReport, TrainConfig};

/// First id of the test split, so train and test ids never collide.
pub const TEST_ID_OFFSET: u64 = 1 << 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPreset {
    pub name: String,
    pub data: BlobSpec,
    pub noise: NoiseSpec,
    pub probe: ProbeConfig,
    pub train: TrainConfig,
    /// Test samples per class; the test split is always balanced and clean.
    pub test_per_class: usize,
    pub seeds: Vec<u64>,
}

impl ExperimentPreset {
    /// Four 8-dimensional blobs, 2000 training samples, boundary noise at 0.4.
    pub fn boundary_idn() -> Self {
        Self {
            name: String::from("boundary-idn"),
            data: BlobSpec {
                n_per_class: 500,
                class_count: 4,
                dim: 8,
                center_spread: 2.5,
                cluster_std: 1.0,
                imbalance_ratios: Vec::new(),
                center_layout: CenterLayout::Equidistant,
            },
            noise: NoiseSpec {
                kind: NoiseKind::Boundary,
                ratio: 0.4,
            },
            probe: ProbeConfig::default(),
            train: TrainConfig::default(),
            test_per_class: 250,
            seeds: vec![0, 1, 2, 3, 4],
        }
    }

    /// Same blobs with class shares 0.55/0.25/0.12/0.08.
    pub fn imbalanced() -> Self {
        let mut p = Self::boundary_idn();
        p.name = String::from("imbalanced");
        p.data.imbalance_ratios = vec![0.55, 0.25, 0.12, 0.08];
        p
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "boundary-idn" => Some(Self::boundary_idn()),
            "imbalanced" => Some(Self::imbalanced()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::config("preset.name", "must not be empty"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("preset.seeds", "need at least one seed"));
        }
        if !(0.0..=1.0).contains(&self.noise.ratio) {
            return Err(Error::config("noise.ratio", "must lie in [0, 1]"));
        }
        self.data.validate()?;
        self.data.class_sizes()?;
        self.train.validate()
    }

    /// The preset with `train.method` and `train.seed` replaced.
    pub fn with_run(&self, method: Method, seed: u64) -> Self {
        let mut p = self.clone();
        p.train.method = method;
        p.train.seed = seed;
        p
    }
}

/// Noisy training split and clean test split drawn from one blob model.
pub fn generate_data(preset: &ExperimentPreset, seed: u64) -> Result<(LabeledDataset, LabeledDataset)> {
    let streams = SeedStreams::new(seed);
    let mut data_rng = streams.stream(Stream::Data);
    let model = BlobModel::random(&preset.data, &mut data_rng)?;
    let clean = model.sample(&preset.data.class_sizes()?, 0, &mut data_rng)?;
    let test_sizes = vec![preset.test_per_class; preset.data.class_count];
    let test = model.sample(&test_sizes, TEST_ID_OFFSET, &mut streams.stream(Stream::TestData))?;
    let train = noise::apply_noise(&clean, &preset.noise, &preset.probe, &mut streams.stream(Stream::Noise))?;
    Ok((train, test))
}

/// Generates data for `train.seed` and trains on it.
pub fn run_experiment(
    preset: &ExperimentPreset,
    observer: &mut dyn FnMut(&EpochSnapshot<'_>),
) -> Result<(LabeledDataset, LabeledDataset, RunReport)> {
    preset.validate()?;
    let (train, test) = generate_data(preset, preset.train.seed)?;
    let report = trainer::run_training(&train, &test, &preset.train, observer)?;
    Ok((train, test, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub metric: String,
    pub value: f64,
    pub epoch: Option<usize>,
    pub seed: u64,
}

/// Flattens a report into finite per-epoch metric records.
pub fn metric_records(report: &RunReport) -> Vec<MetricRecord> {
    let mut out = Vec::new();
    for e in &report.epochs {
        let mut push = |name: &str, v: Option<f64>| {
            if let Some(value) = v.filter(|v| v.is_finite()) {
                out.push(MetricRecord {
                    metric: String::from(name),
                    value,
                    epoch: Some(e.epoch),
                    seed: report.seed,
                });
            }
        };
        push("test_acc", Some(e.test_acc));
        push("test_acc_head1", Some(e.test_acc_head1));
        push("test_acc_head2", Some(e.test_acc_head2));
        push("auc_s1", e.auc_s1);
        push("auc_s2", e.auc_s2);
        push("n_s1", e.n_s1.map(|n| n as f64));
        push("n_s2", e.n_s2.map(|n| n as f64));
        push("precision_s1", e.precision_s1);
        push("precision_s2", e.precision_s2);
        push("loss_x", Some(e.losses.loss_x));
        push("loss_u", Some(e.losses.loss_u));
        push("loss_min", Some(e.losses.loss_min));
        push("loss_max", Some(e.losses.loss_max));
    }
    out
}
