//! The subcommands, as library calls.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use cleansel_core::harness::{self, ExperimentPreset};
use cleansel_core::metrics;
use cleansel_core::trainer::{self, Method, RunReport};
use cleansel_core::LabeledDataset;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{self, Checkpoint};
use crate::config;
use crate::dataset;
use crate::dump::{self, PartitionDump, PartitionRow};
use crate::error::{CliError, Result};
use crate::report;

pub const TRAIN_FILE: &str = "train.csv";
pub const TEST_FILE: &str = "test.csv";
pub const CONFIG_FILE: &str = "config.toml";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const REPORT_FILE: &str = "report.json";
pub const EVAL_FILE: &str = "eval.json";
pub const PARTITION_DIR: &str = "partitions";

#[derive(Debug, Clone, Default)]
pub struct CommonOptions {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: PathBuf,
}

impl CommonOptions {
    /// The configured preset with `--seed` applied to `train.seed`.
    pub fn preset(&self) -> Result<ExperimentPreset> {
        let mut p = match &self.config {
            Some(path) => config::load_config(path)?,
            None => ExperimentPreset::boundary_idn(),
        };
        if let Some(s) = self.seed {
            p.train.seed = s;
        }
        Ok(p)
    }

    /// `--seed` alone, or every seed of the preset.
    pub fn seeds(&self, preset: &ExperimentPreset) -> Vec<u64> {
        self.seed.map_or_else(|| preset.seeds.clone(), |s| vec![s])
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write(path: &Path, body: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, body).map_err(|e| CliError::io(path, e))
}

fn save_split(dir: &Path, preset: &ExperimentPreset, train: &LabeledDataset, test: &LabeledDataset) -> Result<()> {
    create_dir(dir)?;
    dataset::save_dataset(&dir.join(TRAIN_FILE), train)?;
    dataset::save_dataset(&dir.join(TEST_FILE), test)?;
    write(&dir.join(CONFIG_FILE), config::to_config_string(preset))
}

/// Generates the noisy training split and the clean test split for
/// `train.seed` and writes both to `out`.
pub fn gen_data(opts: &CommonOptions) -> Result<(LabeledDataset, LabeledDataset)> {
    let preset = opts.preset()?;
    preset.validate()?;
    let (train, test) = harness::generate_data(&preset, preset.train.seed)?;
    save_split(&opts.out, &preset, &train, &test)?;
    Ok((train, test))
}

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    pub common: CommonOptions,
    pub dump_partitions: bool,
    /// Directory written by `gen-data`; data is generated when absent.
    pub data: Option<PathBuf>,
}

/// Trains one model and writes the data, resolved config, report files,
/// checkpoint and (optionally) partition dumps to `out`.
pub fn train(opts: &TrainOptions) -> Result<RunReport> {
    let preset = opts.common.preset()?;
    preset.validate()?;
    let (train, test) = match &opts.data {
        Some(dir) => (
            dataset::load_dataset(&dir.join(TRAIN_FILE))?,
            dataset::load_dataset(&dir.join(TEST_FILE))?,
        ),
        None => harness::generate_data(&preset, preset.train.seed)?,
    };
    if test.dim() != train.dim() || test.class_count != train.class_count {
        return Err(CliError::config("data", "train and test splits differ in shape"));
    }
    let out = &opts.common.out;
    save_split(out, &preset, &train, &test)?;
    let dump_dir = out.join(PARTITION_DIR);
    if opts.dump_partitions {
        create_dir(&dump_dir)?;
    }

    let mut dump_error = None;
    let run = trainer::train_model(&train, &test, &preset.train, &mut |snap| {
        if opts.dump_partitions && dump_error.is_none() {
            if let Err(e) = dump::save_dump(&dump_dir, &PartitionDump::from_snapshot(snap, &train.ids)) {
                dump_error = Some(e);
            }
        }
    })?;
    if let Some(e) = dump_error {
        return Err(e);
    }
    report::save_report(out, &run.report)?;
    checkpoint::save_checkpoint(
        &out.join(CHECKPOINT_FILE),
        &Checkpoint {
            model: run.model,
            optim: run.optim,
        },
    )?;
    Ok(run.report)
}

/// Identification metrics recomputed from one partition dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochEval {
    pub epoch: usize,
    pub auc_s1: Option<f64>,
    pub auc_s2: Option<f64>,
    pub n_s1: usize,
    pub n_s2: usize,
    pub precision_s1: Option<f64>,
    pub precision_s2: Option<f64>,
    pub class_variance_s1: Option<f64>,
    pub class_variance_s2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub final_test_accuracy: f64,
    pub epochs: Vec<EpochEval>,
}

fn eval_rows(rows: &[PartitionRow], train: &LabeledDataset, truly_clean: &[bool], path: &Path) -> Result<StageEval> {
    if rows.len() != train.len() || rows.iter().zip(&train.ids).any(|(r, &id)| r.id != id) {
        return Err(CliError::Format {
            path: path.to_path_buf(),
            line: 0,
            reason: "partition ids do not match the training set".into(),
        });
    }
    let post: Vec<f64> = rows.iter().map(|r| r.posterior_clean).collect();
    let clean: Vec<bool> = rows.iter().map(|r| r.is_clean).collect();
    Ok(StageEval {
        auc: metrics::auc(&post, truly_clean).ok(),
        n: clean.iter().filter(|&&c| c).count(),
        precision: metrics::precision(&clean, truly_clean),
        class_dist: metrics::class_distribution(&clean, &train.noisy_labels, train.class_count).ok(),
    })
}

struct StageEval {
    auc: Option<f64>,
    n: usize,
    precision: Option<f64>,
    class_dist: Option<Vec<f64>>,
}

/// Recomputes test accuracy from the checkpoint and identification metrics
/// from the partition dumps of a `train` output directory, checks them
/// against its report and writes `eval.json`.
pub fn eval(run_dir: &Path) -> Result<EvalSummary> {
    let train = dataset::load_dataset(&run_dir.join(TRAIN_FILE))?;
    let test = dataset::load_dataset(&run_dir.join(TEST_FILE))?;
    let ckpt = checkpoint::load_checkpoint(&run_dir.join(CHECKPOINT_FILE))?;
    let report = report::load_report(&run_dir.join(REPORT_FILE))?;
    let dump_dir = run_dir.join(PARTITION_DIR);
    let dumps = if dump_dir.is_dir() { dump::load_dumps(&dump_dir)? } else { Vec::new() };

    let probs = ckpt.model.predict_proba(&test.features)?;
    let final_test_accuracy = metrics::accuracy(&probs, &test.true_labels);
    let mut mismatches = Vec::new();
    if final_test_accuracy != report.final_test_accuracy() {
        mismatches.push(format!(
            "final test accuracy {final_test_accuracy} vs {}",
            report.final_test_accuracy()
        ));
    }

    let truly_clean = train.is_truly_clean();
    let mut epochs = Vec::with_capacity(dumps.len());
    for d in &dumps {
        let path = dump_dir.join(PartitionDump::file_name(d.epoch));
        let s1 = eval_rows(&d.s1, &train, &truly_clean, &path)?;
        let s2 = eval_rows(&d.s2, &train, &truly_clean, &path)?;
        let e = EpochEval {
            epoch: d.epoch,
            auc_s1: s1.auc,
            auc_s2: s2.auc,
            n_s1: s1.n,
            n_s2: s2.n,
            precision_s1: s1.precision,
            precision_s2: s2.precision,
            class_variance_s1: s1.class_dist.as_deref().map(metrics::variance),
            class_variance_s2: s2.class_dist.as_deref().map(metrics::variance),
        };
        match report.epochs.get(d.epoch) {
            Some(r) => {
                let same = r.auc_s1 == e.auc_s1
                    && r.auc_s2 == e.auc_s2
                    && r.n_s1 == Some(e.n_s1)
                    && r.n_s2 == Some(e.n_s2)
                    && r.precision_s1 == e.precision_s1
                    && r.precision_s2 == e.precision_s2
                    && r.class_dist_s1 == s1.class_dist
                    && r.class_dist_s2 == s2.class_dist;
                if !same {
                    mismatches.push(format!("epoch {}", d.epoch));
                }
            }
            None => mismatches.push(format!("epoch {} missing from report", d.epoch)),
        }
        epochs.push(e);
    }

    let summary = EvalSummary {
        final_test_accuracy,
        epochs,
    };
    let mut json = serde_json::to_string_pretty(&summary).expect("summaries serialize");
    json.push('\n');
    write(&run_dir.join(EVAL_FILE), json)?;
    if !mismatches.is_empty() {
        return Err(CliError::Mismatch(mismatches.join("; ")));
    }
    Ok(summary)
}

/// Mean and population standard deviation.
fn mean_std(v: &[f64]) -> (f64, f64) {
    let m = v.iter().sum::<f64>() / v.len().max(1) as f64;
    (m, metrics::variance(v).sqrt())
}

fn mean_of(v: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = v.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub method: Method,
    pub seeds: usize,
    pub mean_acc: f64,
    pub std_acc: f64,
    pub mean_auc_s1: Option<f64>,
    pub mean_auc_s2: Option<f64>,
    pub reports: Vec<RunReport>,
}

pub const ABLATION_HEADER: &str = "method,stage1,stage2,seeds,mean_acc,std_acc,mean_auc_s1,mean_auc_s2";

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut out = format!("{ABLATION_HEADER}\n");
    for r in rows {
        let opt = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.method.as_str(),
            u8::from(r.method.uses_stage1()),
            u8::from(r.method.uses_stage2()),
            r.seeds,
            r.mean_acc,
            r.std_acc,
            opt(r.mean_auc_s1),
            opt(r.mean_auc_s2)
        );
    }
    out
}

/// The four-cell grid: neither stage, stage 1 only, stage 2 only, both.
/// Writes `ablation.csv` to `out`.
pub fn ablate(opts: &CommonOptions) -> Result<Vec<AblationRow>> {
    let preset = opts.preset()?;
    preset.validate()?;
    let seeds = opts.seeds(&preset);
    let mut rows = Vec::with_capacity(Method::ALL.len());
    for method in Method::ALL {
        let mut reports = Vec::with_capacity(seeds.len());
        for &seed in &seeds {
            let (_, _, r) = harness::run_experiment(&preset.with_run(method, seed), &mut |_| {})?;
            reports.push(r);
        }
        let accs: Vec<f64> = reports.iter().map(RunReport::final_test_accuracy).collect();
        let (mean_acc, std_acc) = mean_std(&accs);
        rows.push(AblationRow {
            method,
            seeds: seeds.len(),
            mean_acc,
            std_acc,
            mean_auc_s1: mean_of(reports.iter().map(RunReport::mean_auc_s1)),
            mean_auc_s2: mean_of(reports.iter().map(RunReport::mean_auc_s2)),
            reports,
        });
    }
    create_dir(&opts.out)?;
    write(&opts.out.join("ablation.csv"), ablation_csv(&rows))?;
    Ok(rows)
}

/// Values to sweep; an empty list keeps the configured value.
#[derive(Debug, Clone, Default)]
pub struct SweepGrid {
    pub theta: Vec<f64>,
    pub theta_agg: Vec<f64>,
    pub lambda_min: Vec<f64>,
    pub lambda_max: Vec<f64>,
    pub n_max: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub theta: f64,
    pub theta_agg: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub n_max: usize,
    pub mean_acc: f64,
    pub mean_auc_s1: Option<f64>,
    pub mean_auc_s2: Option<f64>,
    pub mean_precision_s2: Option<f64>,
}

pub const SWEEP_HEADER: &str = "theta,theta_agg,lambda_min,lambda_max,n_max,mean_acc,mean_auc_s1,mean_auc_s2,mean_precision_s2";

fn or_default<T: Copy>(v: &[T], d: T) -> Vec<T> {
    if v.is_empty() {
        vec![d]
    } else {
        v.to_vec()
    }
}

/// Full grid over the five selection hyperparameters. Writes `sweep.csv`.
pub fn sweep(opts: &CommonOptions, grid: &SweepGrid) -> Result<Vec<SweepRow>> {
    let base = opts.preset()?;
    base.validate()?;
    let seeds = opts.seeds(&base);
    let t = &base.train;
    let mut rows = Vec::new();
    for &theta in &or_default(&grid.theta, t.theta) {
        for &theta_agg in &or_default(&grid.theta_agg, t.theta_agg) {
            for &lambda_min in &or_default(&grid.lambda_min, t.lambda_min) {
                for &lambda_max in &or_default(&grid.lambda_max, t.lambda_max) {
                    for &n_max in &or_default(&grid.n_max, t.n_max) {
                        let mut p = base.clone();
                        p.train.theta = theta;
                        p.train.theta_agg = theta_agg;
                        p.train.lambda_min = lambda_min;
                        p.train.lambda_max = lambda_max;
                        p.train.n_max = n_max;
                        let mut reports = Vec::with_capacity(seeds.len());
                        for &seed in &seeds {
                            p.train.seed = seed;
                            reports.push(harness::run_experiment(&p, &mut |_| {})?.2);
                        }
                        rows.push(SweepRow {
                            theta,
                            theta_agg,
                            lambda_min,
                            lambda_max,
                            n_max,
                            mean_acc: mean_std(&reports.iter().map(RunReport::final_test_accuracy).collect::<Vec<_>>()).0,
                            mean_auc_s1: mean_of(reports.iter().map(RunReport::mean_auc_s1)),
                            mean_auc_s2: mean_of(reports.iter().map(RunReport::mean_auc_s2)),
                            mean_precision_s2: mean_of(reports.iter().map(RunReport::mean_precision_s2)),
                        });
                    }
                }
            }
        }
    }
    let mut csv = format!("{SWEEP_HEADER}\n");
    for r in &rows {
        let opt = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{}",
            r.theta,
            r.theta_agg,
            r.lambda_min,
            r.lambda_max,
            r.n_max,
            r.mean_acc,
            opt(r.mean_auc_s1),
            opt(r.mean_auc_s2),
            opt(r.mean_precision_s2)
        );
    }
    create_dir(&opts.out)?;
    write(&opts.out.join("sweep.csv"), csv)?;
    Ok(rows)
}
