use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{Document, LabeledDataset, Series, SeriesError};
use crate::FORMAT_VERSION;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeriesFormat {
    Csv,
    Json,
}

impl SeriesFormat {
    /// Guess from the file extension; anything other than `.json` is CSV.
    pub fn from_path(path: &Path) -> SeriesFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => SeriesFormat::Json,
            _ => SeriesFormat::Csv,
        }
    }
}

fn read(path: &Path) -> Result<String, SeriesError> {
    fs::read_to_string(path).map_err(|source| SeriesError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Load a one-column CSV (blank lines and `#` comments skipped) or a JSON
/// numeric array. JSON objects with a `values` array are accepted too, which
/// is the shape this crate writes.
pub fn load_series(path: &Path, format: SeriesFormat) -> Result<Series, SeriesError> {
    let text = read(path)?;
    match format {
        SeriesFormat::Csv => parse_csv(&text),
        SeriesFormat::Json => parse_json(&text),
    }
}

pub(crate) fn parse_csv(text: &str) -> Result<Series, SeriesError> {
    let mut values = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let field = raw.trim();
        if field.is_empty() || field.starts_with('#') {
            continue;
        }
        if field.contains(',') {
            return Err(SeriesError::Line {
                line,
                reason: "expected a single column".into(),
            });
        }
        let v: f64 = field.parse().map_err(|_| SeriesError::Line {
            line,
            reason: format!("cannot parse {field:?} as a number"),
        })?;
        if !v.is_finite() {
            return Err(SeriesError::Line {
                line,
                reason: format!("non-finite value {field}"),
            });
        }
        values.push(v);
    }
    Series::new(values)
}

pub(crate) fn parse_json(text: &str) -> Result<Series, SeriesError> {
    let root: Value = serde_json::from_str(text)?;
    let items = match &root {
        Value::Array(a) => a,
        Value::Object(o) => match o.get("values") {
            Some(Value::Array(a)) => a,
            _ => {
                return Err(SeriesError::InvalidParameter(
                    "json object has no numeric `values` array".into(),
                ))
            }
        },
        _ => {
            return Err(SeriesError::InvalidParameter(
                "expected a json array".into(),
            ))
        }
    };
    let values = items
        .iter()
        .enumerate()
        .map(|(index, v)| {
            v.as_f64().ok_or_else(|| SeriesError::JsonElement {
                index,
                reason: format!("{v} is not a finite number"),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Series::new(values)
}

#[derive(Deserialize)]
#[serde(untagged)]
enum DatasetFile {
    Full(LabeledDataset),
    Records(Vec<Document>),
}

/// Load `{"n_classes": k, "documents": [{"tokens": [[..]..], "label": c}, ..]}`
/// or a bare array of document records (class count inferred from labels).
pub fn load_dataset(path: &Path) -> Result<LabeledDataset, SeriesError> {
    let text = read(path)?;
    let ds = match serde_json::from_str::<DatasetFile>(&text)? {
        DatasetFile::Full(ds) => ds,
        DatasetFile::Records(documents) => {
            let n_classes = documents.iter().map(|d| d.label + 1).max().unwrap_or(0);
            let n_tags = documents
                .iter()
                .filter_map(|d| d.tags.as_ref())
                .flat_map(|t| t.iter().map(|x| x + 1))
                .max();
            LabeledDataset {
                n_classes,
                n_tags,
                documents,
            }
        }
    };
    ds.validate()?;
    Ok(ds)
}

/// Write a dataset with `format_version` and the generating configuration.
pub fn save_dataset(path: &Path, ds: &LabeledDataset, config: &Value) -> Result<(), SeriesError> {
    let mut obj = serde_json::to_value(ds)?;
    if let Value::Object(map) = &mut obj {
        map.insert("format_version".into(), FORMAT_VERSION.into());
        map.insert("config".into(), config.clone());
    }
    fs::write(path, serde_json::to_vec(&obj)?).map_err(|source| SeriesError::Io {
        path: path.display().to_string(),
        source,
    })
}
