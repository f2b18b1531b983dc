//! Report files: rows and aggregates as CSV or JSON, plus a JSON summary.
//! Every writer is a pure function of its inputs, so equal inputs give equal
//! bytes.

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::config::RawConfig;
use crate::error::{HarnessError, Result};

pub const ROW_HEADER: &[&str] = &[
    "scheme",
    "sigma",
    "channel",
    "channel_alpha",
    "attack",
    "attack_alpha",
    "trial",
    "score",
    "threshold",
    "accepted",
    "bit_accuracy",
];

pub const CELL_HEADER: &[&str] = &[
    "scheme",
    "sigma",
    "channel",
    "channel_alpha",
    "attack",
    "attack_alpha",
    "trials",
    "accepted",
    "threshold",
    "det_rate",
    "mean_bit_accuracy",
    "std_bit_accuracy",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// Writes `records` to `<dir>/<stem>.<ext>` and returns the path.
pub fn write_table<T: Serialize>(
    dir: &Path,
    stem: &str,
    header: &[&str],
    records: &[T],
    format: Format,
) -> Result<PathBuf> {
    let path = dir.join(format!("{stem}.{}", format.extension()));
    let bytes = match format {
        Format::Csv => csv_bytes(header, records)?,
        Format::Json => json_bytes(&records)?,
    };
    write_file(&path, &bytes)?;
    Ok(path)
}

/// CSV with a fixed header line, present even when `records` is empty.
pub fn csv_bytes<T: Serialize>(header: &[&str], records: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    let fail = |e: csv::Error| HarnessError::Invariant(format!("csv encoding: {e}"));
    w.write_record(header).map_err(fail)?;
    for r in records {
        w.serialize(r).map_err(fail)?;
    }
    w.into_inner()
        .map_err(|e| HarnessError::Invariant(format!("csv encoding: {e}")))
}

pub fn json_bytes<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)
        .map_err(|e| HarnessError::Invariant(format!("json encoding: {e}")))?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| HarnessError::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| HarnessError::io(path, e))
}

/// JSON summary: provenance fields first, then command-specific `extra`
/// entries. Keys are emitted sorted.
pub fn summary(command: &str, config: &RawConfig, seed: u64, extra: Map<String, Value>) -> Value {
    let mut m = Map::new();
    m.insert("command".into(), command.into());
    m.insert("version".into(), env!("CARGO_PKG_VERSION").into());
    m.insert("seed".into(), seed.into());
    m.insert("config_hash".into(), config.hash().into());
    m.insert(
        "config".into(),
        Value::Object(
            config
                .entries()
                .iter()
                .map(|(k, v)| (k.clone(), Value::String(v.clone())))
                .collect(),
        ),
    );
    m.extend(extra);
    Value::Object(m)
}

pub fn to_value<T: Serialize>(value: &T) -> Result<Value> {
    serde_json::to_value(value).map_err(|e| HarnessError::Invariant(format!("json encoding: {e}")))
}
