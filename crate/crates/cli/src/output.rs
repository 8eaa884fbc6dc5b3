//! File writers. Every artefact carries `format_version` and the effective
//! configuration: JSON files as fields, CSV files as leading `#` lines.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;

use fractamine::FORMAT_VERSION;

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// CSV with a `#` preamble holding the format version and the configuration
/// as compact JSON. Series files omit the column header so they load back.
pub fn write_csv(
    path: &Path,
    config: &Value,
    notes: &[String],
    header: Option<&str>,
    rows: &[String],
) -> Result<()> {
    let mut text = String::new();
    writeln!(text, "# format_version: {FORMAT_VERSION}")?;
    writeln!(text, "# config: {}", serde_json::to_string(config)?)?;
    for n in notes {
        writeln!(text, "# {n}")?;
    }
    if let Some(h) = header {
        writeln!(text, "{h}")?;
    }
    for r in rows {
        writeln!(text, "{r}")?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// `out/series.csv` → `out/series.manifest.json`.
pub fn sibling_manifest(path: &Path) -> PathBuf {
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("output");
    path.with_file_name(format!("{stem}.manifest.json"))
}

#[derive(Serialize)]
pub struct Manifest<'a> {
    pub format_version: u32,
    pub command: &'a str,
    pub config: Value,
    pub outputs: Vec<String>,
}

impl<'a> Manifest<'a> {
    pub fn new(command: &'a str, config: Value, outputs: &[&str]) -> Self {
        Manifest {
            format_version: FORMAT_VERSION,
            command,
            config,
            outputs: outputs.iter().map(|s| s.to_string()).collect(),
        }
    }
}

/// Shortest round-trip formatting, `NA` for missing entries.
pub fn num(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}
