//! Model and optimizer checkpoints.
//!
//! Text with every float stored as its 16-digit hex bit pattern, so a
//! round trip is bit-exact:
//!
//! ```text
//! cleansel-checkpoint 1
//! layers 8:32 32:32 32:16 16:4
//! optim <lr> <momentum> <weight_decay>
//! param <hex> <hex> ...      one line per parameter tensor
//! velocity <hex> <hex> ...   one line per momentum buffer
//! ```
//!
//! `layers` lists `in:out` for each extractor layer and finally the head
//! shape shared by both heads.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use cleansel_core::nn::{Linear, ModelParams, OptimState};

use crate::error::{CliError, Result};

pub const MAGIC: &str = "cleansel-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: ModelParams,
    pub optim: OptimState,
}

fn hex_line(out: &mut String, tag: &str, values: &[f64]) {
    out.push_str(tag);
    for v in values {
        let _ = write!(out, " {:016x}", v.to_bits());
    }
    out.push('\n');
}

pub fn format_checkpoint(c: &Checkpoint) -> String {
    let mut out = format!("{MAGIC} {VERSION}\nlayers");
    for l in c.model.extractor.iter().chain([&c.model.head1]) {
        let _ = write!(out, " {}:{}", l.input_dim(), l.output_dim());
    }
    out.push('\n');
    hex_line(&mut out, "optim", &[c.optim.learning_rate, c.optim.momentum, c.optim.weight_decay]);
    for (_, _, t) in c.model.tensors() {
        hex_line(&mut out, "param", t);
    }
    for (_, _, t) in c.optim.velocity.tensors() {
        hex_line(&mut out, "velocity", t);
    }
    out
}

pub fn parse_checkpoint(text: &str, path: &Path) -> Result<Checkpoint> {
    let bad = |line: usize, reason: String| CliError::Format {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut next = |tag: &str| -> Result<(usize, Vec<&str>)> {
        let (n, l) = lines.next().ok_or_else(|| bad(0, format!("missing `{tag}` line")))?;
        let mut parts = l.split_whitespace();
        if parts.next() != Some(tag) {
            return Err(bad(n, format!("expected `{tag}`")));
        }
        Ok((n, parts.collect()))
    };
    let (n, version) = next(MAGIC)?;
    if version != [VERSION.to_string()] {
        return Err(bad(n, format!("unsupported version {version:?}")));
    }
    let (n, layers) = next("layers")?;
    let mut shapes = Vec::new();
    for l in &layers {
        let dims = l
            .split_once(':')
            .and_then(|(a, b)| Some((a.parse::<usize>().ok()?, b.parse::<usize>().ok()?)))
            .ok_or_else(|| bad(n, format!("bad layer shape `{l}`")))?;
        shapes.push(dims);
    }
    let Some(&(head_in, classes)) = shapes.last().filter(|_| shapes.len() >= 2) else {
        return Err(bad(n, "need at least one extractor layer and the head".into()));
    };
    let extractor = shapes[..shapes.len() - 1].iter().map(|&(i, o)| Linear::zeros(i, o)).collect();
    let head = Linear::zeros(head_in, classes);
    let mut model = ModelParams::from_layers(extractor, head.clone(), head)?;

    let hex = |n: usize, tokens: &[&str], want: usize| -> Result<Vec<f64>> {
        if tokens.len() != want {
            return Err(bad(n, format!("expected {want} values, found {}", tokens.len())));
        }
        tokens
            .iter()
            .map(|t| u64::from_str_radix(t, 16).map(f64::from_bits).map_err(|_| bad(n, format!("bad value `{t}`"))))
            .collect()
    };
    let (n, o) = next("optim")?;
    let o = hex(n, &o, 3)?;
    let mut velocity = model.zeros_like();
    for (target, tag) in [(&mut model, "param"), (&mut velocity, "velocity")] {
        for (_, _, t) in target.tensors_mut() {
            let (n, tokens) = next(tag)?;
            t.copy_from_slice(&hex(n, &tokens, t.len())?);
        }
    }
    if let Some((n, _)) = lines.find(|(_, l)| !l.trim().is_empty()) {
        return Err(bad(n, "trailing content".into()));
    }
    if !model.is_finite() || !velocity.is_finite() {
        return Err(bad(0, "non-finite parameters".into()));
    }
    let mut optim = OptimState::new(&model, o[0], o[1], o[2])?;
    optim.velocity = velocity;
    Ok(Checkpoint { model, optim })
}

pub fn save_checkpoint(path: &Path, c: &Checkpoint) -> Result<()> {
    fs::write(path, format_checkpoint(c)).map_err(|e| CliError::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_checkpoint(&text, path)
}
