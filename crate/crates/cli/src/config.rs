//! Flat `key = value` configuration with dotted section names, e.g.
//! `train.lambda_min = 0.1`.
//!
//! A file overrides a base preset (`preset = "imbalanced"`, default
//! `boundary-idn`). Every key must already exist in the preset and keep its
//! type; integers are accepted where a float is expected.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use cleansel_core::harness::ExperimentPreset;
use toml::{Table, Value};

use crate::error::{CliError, Result};

pub const PRESET_KEY: &str = "preset";

fn flatten(prefix: &str, table: &Table, out: &mut BTreeMap<String, Value>) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            Value::Table(t) => flatten(&key, t, out),
            other => {
                out.insert(key, other.clone());
            }
        }
    }
}

fn unflatten(flat: &BTreeMap<String, Value>) -> Table {
    let mut root = Table::new();
    for (key, v) in flat {
        let mut parts: Vec<&str> = key.split('.').collect();
        let leaf = parts.pop().expect("split yields at least one part");
        let mut t = &mut root;
        for p in parts {
            t = t
                .entry(p)
                .or_insert_with(|| Value::Table(Table::new()))
                .as_table_mut()
                .expect("sections and values never share a key");
        }
        t.insert(leaf.to_string(), v.clone());
    }
    root
}

fn flat_preset(p: &ExperimentPreset) -> BTreeMap<String, Value> {
    let table = Table::try_from(p).expect("presets serialize to a table");
    let mut flat = BTreeMap::new();
    flatten("", &table, &mut flat);
    flat
}

/// `value` coerced to the type of `base`, or `None` if incompatible.
fn coerce(base: &Value, value: &Value) -> Option<Value> {
    match (base, value) {
        (Value::Float(_), Value::Integer(i)) => Some(Value::Float(*i as f64)),
        (Value::Array(b), Value::Array(v)) => {
            let Some(proto) = b.first() else {
                return Some(value.clone());
            };
            v.iter().map(|x| coerce(proto, x)).collect::<Option<Vec<_>>>().map(Value::Array)
        }
        (b, v) if b.type_str() == v.type_str() => Some(v.clone()),
        _ => None,
    }
}

fn build(flat: &BTreeMap<String, Value>) -> std::result::Result<ExperimentPreset, toml::de::Error> {
    Value::Table(unflatten(flat)).try_into()
}

/// Applies dotted-key overrides to `base`.
pub fn apply_overrides(base: &ExperimentPreset, overrides: &BTreeMap<String, Value>) -> Result<ExperimentPreset> {
    let base_flat = flat_preset(base);
    let mut merged = base_flat.clone();
    for (key, value) in overrides {
        let Some(b) = base_flat.get(key) else {
            return Err(CliError::config(key, "unknown field"));
        };
        let v = coerce(b, value)
            .ok_or_else(|| CliError::config(key, format!("expected {}, found {}", b.type_str(), value.type_str())))?;
        merged.insert(key.clone(), v);
    }
    match build(&merged) {
        Ok(p) => Ok(p),
        Err(e) => {
            // name the first override that fails on its own
            for (key, value) in overrides {
                let mut one = base_flat.clone();
                one.insert(key.clone(), coerce(&base_flat[key], value).expect("checked above"));
                if let Err(e) = build(&one) {
                    return Err(CliError::config(key, e.message().to_string()));
                }
            }
            Err(CliError::config("config", e.message().to_string()))
        }
    }
}

pub fn parse_config(text: &str, path: &Path) -> Result<ExperimentPreset> {
    let table: Table = text.parse().map_err(|e: toml::de::Error| CliError::Format {
        path: path.to_path_buf(),
        line: e.span().map_or(0, |s| text[..s.start].lines().count().max(1)),
        reason: e.message().to_string(),
    })?;
    let mut flat = BTreeMap::new();
    flatten("", &table, &mut flat);
    let base = match flat.remove(PRESET_KEY) {
        None => ExperimentPreset::boundary_idn(),
        Some(Value::String(name)) => {
            ExperimentPreset::by_name(&name).ok_or_else(|| CliError::config(PRESET_KEY, format!("unknown preset `{name}`")))?
        }
        Some(other) => return Err(CliError::config(PRESET_KEY, format!("expected string, found {}", other.type_str()))),
    };
    let preset = apply_overrides(&base, &flat)?;
    preset.validate()?;
    Ok(preset)
}

pub fn load_config(path: &Path) -> Result<ExperimentPreset> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_config(&text, path)
}

/// Every field as one `key = value` line: top-level keys first, then the
/// dotted sections in alphabetical order.
pub fn to_config_string(p: &ExperimentPreset) -> String {
    let flat = flat_preset(p);
    let mut keys: Vec<&String> = flat.keys().collect();
    keys.sort_by_key(|k| (k.contains('.'), k.as_str()));
    let mut out = String::new();
    for k in keys {
        out.push_str(&format!("{k} = {}\n", flat[k]));
    }
    out
}
