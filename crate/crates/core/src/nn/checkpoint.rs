//! Checkpoints: a JSON manifest plus a flat little-endian `f64` blob.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::model::{Model, ModelConfig, ParamGroup, ParamInfo, ParamStore};
use crate::FORMAT_VERSION;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed manifest: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported format version {0}")]
    Version(u32),
    #[error("blob has {got} bytes, manifest describes {expected}")]
    BlobSize { expected: usize, got: usize },
    #[error("blob checksum mismatch")]
    Checksum,
    #[error("manifest does not match the model layout: {0}")]
    Layout(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: [usize; 2],
    pub group: ParamGroup,
    /// Offset in `f64` elements.
    pub offset: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub config: ModelConfig,
    pub blob: String,
    pub blob_sha256: String,
    pub params: Vec<ParamEntry>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CheckpointError + '_ {
    move |source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Blob path next to a manifest: `model.json` → `model.bin`.
pub fn blob_path(manifest: &Path) -> PathBuf {
    manifest.with_extension("bin")
}

pub fn save(model: &Model, manifest_path: &Path) -> Result<Manifest, CheckpointError> {
    let mut bytes = Vec::with_capacity(model.params.count() * 8);
    let mut params = Vec::with_capacity(model.params.info.len());
    let mut offset = 0;
    for (info, values) in model.params.info.iter().zip(&model.params.values) {
        for v in values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        params.push(ParamEntry {
            name: info.name.clone(),
            shape: [info.rows, info.cols],
            group: info.group,
            offset,
            len: values.len(),
        });
        offset += values.len();
    }
    let blob = blob_path(manifest_path);
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        config: model.config.clone(),
        blob: blob
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        blob_sha256: hex::encode(Sha256::digest(&bytes)),
        params,
    };
    fs::write(&blob, &bytes).map_err(io_err(&blob))?;
    let json = serde_json::to_string_pretty(&manifest)?;
    fs::write(manifest_path, json).map_err(io_err(manifest_path))?;
    Ok(manifest)
}

pub fn load(manifest_path: &Path) -> Result<Model, CheckpointError> {
    let text = fs::read_to_string(manifest_path).map_err(io_err(manifest_path))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(CheckpointError::Version(manifest.format_version));
    }
    let blob = manifest_path.with_file_name(&manifest.blob);
    let bytes = fs::read(&blob).map_err(io_err(&blob))?;
    let expected = manifest.params.iter().map(|p| p.len).sum::<usize>() * 8;
    if bytes.len() != expected {
        return Err(CheckpointError::BlobSize {
            expected,
            got: bytes.len(),
        });
    }
    if hex::encode(Sha256::digest(&bytes)) != manifest.blob_sha256 {
        return Err(CheckpointError::Checksum);
    }
    let layout = ParamStore::layout(&manifest.config);
    let described: Vec<ParamInfo> = manifest
        .params
        .iter()
        .map(|p| ParamInfo {
            name: p.name.clone(),
            rows: p.shape[0],
            cols: p.shape[1],
            group: p.group,
        })
        .collect();
    if layout != described {
        return Err(CheckpointError::Layout(
            "parameter names or shapes differ".into(),
        ));
    }
    let values = manifest
        .params
        .iter()
        .map(|p| {
            bytes[p.offset * 8..(p.offset + p.len) * 8]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect()
        })
        .collect();
    let params = ParamStore::with_values(layout, values)
        .map_err(|e| CheckpointError::Layout(e.to_string()))?;
    Ok(Model {
        config: manifest.config,
        params,
    })
}
