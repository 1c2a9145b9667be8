//! Run report files: the full report as JSON and a flat per-epoch CSV.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use cleansel_core::trainer::RunReport;

use crate::error::{CliError, Result};

pub const METRICS_HEADER: &str = "epoch,acc,auc_s1,auc_s2,n_s1,n_s2,Lx,Lu,Lmin,Lmax";

fn cell<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

pub fn metrics_csv(report: &RunReport) -> String {
    let mut out = format!("{METRICS_HEADER}\n");
    for e in &report.epochs {
        let l = &e.losses;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            e.epoch,
            e.test_acc,
            cell(e.auc_s1),
            cell(e.auc_s2),
            cell(e.n_s1),
            cell(e.n_s2),
            l.loss_x,
            l.loss_u,
            l.loss_min,
            l.loss_max
        );
    }
    out
}

pub fn report_json(report: &RunReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("reports serialize");
    s.push('\n');
    s
}

pub fn save_report(dir: &Path, report: &RunReport) -> Result<()> {
    for (name, body) in [("report.json", report_json(report)), ("metrics.csv", metrics_csv(report))] {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|e| CliError::io(&path, e))?;
    }
    Ok(())
}

pub fn load_report(path: &Path) -> Result<RunReport> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Format {
        path: path.to_path_buf(),
        line: e.line(),
        reason: e.to_string(),
    })
}
