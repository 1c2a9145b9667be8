//! Per-epoch partition dumps.
//!
//! ```text
//! # epoch 7
//! id, stage, score, posterior_clean, is_clean
//! 12, S1, 0.93, 0.99, 1
//! 12, S2, 0.04, 0.97, 1
//! # consistency n_max=50 lambda_min=0.1
//! id, d, d_star
//! 12, 0.04, 0.01
//! ```
//!
//! The consistency block is present only when stage 2 ran. Floats use the
//! shortest exact representation.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use cleansel_core::stage1::{Partition, Stage};
use cleansel_core::stage2::ConsistencyReport;
use cleansel_core::trainer::EpochSnapshot;

use crate::error::{CliError, Result};

pub const PARTITION_HEADER: &str = "id, stage, score, posterior_clean, is_clean";
pub const CONSISTENCY_HEADER: &str = "id, d, d_star";

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionRow {
    pub id: u64,
    pub score: f64,
    pub posterior_clean: f64,
    pub is_clean: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyRow {
    pub id: u64,
    pub d: f64,
    pub d_star: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyBlock {
    pub n_max: usize,
    pub lambda_min: f64,
    pub rows: Vec<ConsistencyRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionDump {
    pub epoch: usize,
    pub s1: Vec<PartitionRow>,
    pub s2: Vec<PartitionRow>,
    pub consistency: Option<ConsistencyBlock>,
}

fn rows_of(p: &Partition, ids: &[u64]) -> Vec<PartitionRow> {
    (0..p.len())
        .map(|i| PartitionRow {
            id: ids[i],
            score: p.score[i],
            posterior_clean: p.posterior_clean[i],
            is_clean: p.is_clean[i],
        })
        .collect()
}

impl PartitionDump {
    pub fn from_snapshot(snap: &EpochSnapshot<'_>, ids: &[u64]) -> Self {
        Self {
            epoch: snap.epoch,
            s1: rows_of(snap.s1, ids),
            s2: rows_of(snap.s2, ids),
            consistency: snap.consistency.map(|c: &ConsistencyReport| ConsistencyBlock {
                n_max: c.n_max,
                lambda_min: c.lambda_min,
                rows: c
                    .indices
                    .iter()
                    .zip(c.d.iter().zip(&c.d_star))
                    .map(|(&i, (&d, &d_star))| ConsistencyRow { id: ids[i], d, d_star })
                    .collect(),
            }),
        }
    }

    pub fn file_name(epoch: usize) -> String {
        format!("epoch_{epoch:03}.txt")
    }

    pub fn format(&self) -> String {
        let mut out = format!("# epoch {}\n{PARTITION_HEADER}\n", self.epoch);
        for (stage, rows) in [(Stage::S1, &self.s1), (Stage::S2, &self.s2)] {
            for r in rows {
                let _ = writeln!(
                    out,
                    "{}, {}, {:?}, {:?}, {}",
                    r.id,
                    stage.as_str(),
                    r.score,
                    r.posterior_clean,
                    u8::from(r.is_clean)
                );
            }
        }
        if let Some(c) = &self.consistency {
            let _ = writeln!(out, "# consistency n_max={} lambda_min={:?}\n{CONSISTENCY_HEADER}", c.n_max, c.lambda_min);
            for r in &c.rows {
                let _ = writeln!(out, "{}, {:?}, {:?}", r.id, r.d, r.d_star);
            }
        }
        out
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let bad = |line: usize, reason: String| CliError::Format {
            path: path.to_path_buf(),
            line,
            reason,
        };
        let num = |n: usize, s: &str| s.parse::<f64>().map_err(|_| bad(n, format!("bad number `{s}`")));
        let id = |n: usize, s: &str| s.parse::<u64>().map_err(|_| bad(n, format!("bad id `{s}`")));
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        let epoch = match lines.next() {
            Some((_, l)) => l
                .strip_prefix("# epoch ")
                .and_then(|e| e.parse().ok())
                .ok_or_else(|| bad(1, "expected `# epoch N`".into()))?,
            None => return Err(bad(1, "empty dump".into())),
        };
        if lines.next().map(|(_, l)| l) != Some(PARTITION_HEADER) {
            return Err(bad(2, format!("expected `{PARTITION_HEADER}`")));
        }
        let mut dump = Self {
            epoch,
            s1: Vec::new(),
            s2: Vec::new(),
            consistency: None,
        };
        for (n, line) in lines.by_ref() {
            if let Some(rest) = line.strip_prefix("# consistency ") {
                let mut block = ConsistencyBlock {
                    n_max: 0,
                    lambda_min: 0.0,
                    rows: Vec::new(),
                };
                for kv in rest.split_whitespace() {
                    match kv.split_once('=') {
                        Some(("n_max", v)) => block.n_max = v.parse().map_err(|_| bad(n, format!("bad n_max `{v}`")))?,
                        Some(("lambda_min", v)) => block.lambda_min = num(n, v)?,
                        _ => return Err(bad(n, format!("unexpected `{kv}`"))),
                    }
                }
                dump.consistency = Some(block);
                break;
            }
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            let [i, stage, score, post, clean] = f[..] else {
                return Err(bad(n, "expected 5 fields".into()));
            };
            let row = PartitionRow {
                id: id(n, i)?,
                score: num(n, score)?,
                posterior_clean: num(n, post)?,
                is_clean: match clean {
                    "1" => true,
                    "0" => false,
                    _ => return Err(bad(n, format!("bad flag `{clean}`"))),
                },
            };
            match stage {
                "S1" => dump.s1.push(row),
                "S2" => dump.s2.push(row),
                _ => return Err(bad(n, format!("bad stage `{stage}`"))),
            }
        }
        if let Some(block) = dump.consistency.as_mut() {
            if lines.next().map(|(_, l)| l) != Some(CONSISTENCY_HEADER) {
                return Err(bad(0, format!("expected `{CONSISTENCY_HEADER}`")));
            }
            for (n, line) in lines {
                let f: Vec<&str> = line.split(',').map(str::trim).collect();
                let [i, d, ds] = f[..] else {
                    return Err(bad(n, "expected 3 fields".into()));
                };
                block.rows.push(ConsistencyRow {
                    id: id(n, i)?,
                    d: num(n, d)?,
                    d_star: num(n, ds)?,
                });
            }
        }
        Ok(dump)
    }
}

pub fn save_dump(dir: &Path, dump: &PartitionDump) -> Result<PathBuf> {
    let path = dir.join(PartitionDump::file_name(dump.epoch));
    fs::write(&path, dump.format()).map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}

/// All dumps in `dir`, ordered by epoch.
pub fn load_dumps(dir: &Path) -> Result<Vec<PartitionDump>> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut paths: Vec<PathBuf> = Vec::new();
    for e in entries {
        let p = e.map_err(|e| CliError::io(dir, e))?.path();
        if p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("epoch_")) {
            paths.push(p);
        }
    }
    paths.sort();
    let mut dumps = Vec::with_capacity(paths.len());
    for p in paths {
        let text = fs::read_to_string(&p).map_err(|e| CliError::io(&p, e))?;
        dumps.push(PartitionDump::parse(&text, &p)?);
    }
    dumps.sort_by_key(|d| d.epoch);
    Ok(dumps)
}
