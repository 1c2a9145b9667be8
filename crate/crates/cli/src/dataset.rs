//! Dataset text files.
//!
//! A header line `N d C` followed by one row per sample:
//! `id, x_1, ..., x_d, true_label, noisy_label`. Floats are written in the
//! shortest form that parses back to the same bits.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use cleansel_core::linalg::DenseMatrix;
use cleansel_core::LabeledDataset;

use crate::error::{CliError, Result};

pub fn format_dataset(d: &LabeledDataset) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{} {} {}", d.len(), d.dim(), d.class_count);
    for i in 0..d.len() {
        let _ = write!(out, "{}", d.ids[i]);
        for x in d.features.row(i) {
            let _ = write!(out, ", {x:?}");
        }
        let _ = writeln!(out, ", {}, {}", d.true_labels[i], d.noisy_labels[i]);
    }
    out
}

pub fn parse_dataset(text: &str, path: &Path) -> Result<LabeledDataset> {
    let bad = |line: usize, reason: String| CliError::Format {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| bad(1, "missing header `N d C`".into()))?;
    let head: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| bad(1, format!("bad header field `{t}`"))))
        .collect::<Result<_>>()?;
    let [n, dim, classes] = head[..] else {
        return Err(bad(1, "header must be `N d C`".into()));
    };

    let mut ids = Vec::with_capacity(n);
    let mut data = Vec::with_capacity(n * dim);
    let mut true_labels = Vec::with_capacity(n);
    let mut noisy_labels = Vec::with_capacity(n);
    for (idx, line) in lines {
        let lineno = idx + 1;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != dim + 3 {
            return Err(bad(lineno, format!("expected {} fields, found {}", dim + 3, fields.len())));
        }
        ids.push(fields[0].parse().map_err(|_| bad(lineno, format!("bad id `{}`", fields[0])))?);
        for f in &fields[1..=dim] {
            let v: f64 = f.parse().map_err(|_| bad(lineno, format!("bad feature `{f}`")))?;
            if !v.is_finite() {
                return Err(bad(lineno, format!("non-finite feature `{f}`")));
            }
            data.push(v);
        }
        let label = |s: &str| s.parse::<usize>().map_err(|_| bad(lineno, format!("bad label `{s}`")));
        true_labels.push(label(fields[dim + 1])?);
        noisy_labels.push(label(fields[dim + 2])?);
    }
    if ids.len() != n {
        return Err(bad(1, format!("header declares {n} rows, found {}", ids.len())));
    }
    let features = DenseMatrix::new(n, dim, data)?;
    Ok(LabeledDataset::new(features, true_labels, noisy_labels, ids, classes)?)
}

pub fn save_dataset(path: &Path, d: &LabeledDataset) -> Result<()> {
    fs::write(path, format_dataset(d)).map_err(|e| CliError::io(path, e))
}

pub fn load_dataset(path: &Path) -> Result<LabeledDataset> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_dataset(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> LabeledDataset {
        let x = DenseMatrix::from_rows(&[vec![0.1, -2.5e-300], vec![1.0 / 3.0, 7.0]]).unwrap();
        LabeledDataset::new(x, vec![0, 1], vec![1, 1], vec![4, 9], 2).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let d = tiny();
        let text = format_dataset(&d);
        assert!(text.starts_with("2 2 2\n4, 0.1, -2.5e-300, 0, 1\n"));
        assert_eq!(parse_dataset(&text, Path::new("t")).unwrap(), d);
    }

    #[test]
    fn malformed_rows_report_their_line() {
        let text = "2 2 2\n4, 0.1, 0.2, 0, 1\n9, 0.3, x, 1, 1\n";
        match parse_dataset(text, Path::new("t")) {
            Err(CliError::Format { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert!(parse_dataset("3 2 2\n4, 0.1, 0.2, 0, 1\n", Path::new("t")).is_err());
        assert!(parse_dataset("1 1 2\n4, 0.1, 0, 5\n", Path::new("t")).is_err());
    }
}
