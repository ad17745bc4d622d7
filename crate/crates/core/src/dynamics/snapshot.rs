//! Field snapshots: raw little-endian `f64` pairs `(re, im)` in row-major
//! order, plus a JSON sidecar describing the grid.

use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::field::Field2D;

pub const SNAPSHOT_SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotMeta {
    #[serde(rename = "schemaVersion")]
    pub schema_version: u32,
    #[serde(rename = "M")]
    pub cells: usize,
    pub n: usize,
    pub epsilon: f64,
    pub t: f64,
    pub sigma: f64,
    #[serde(rename = "byteOrder")]
    pub byte_order: String,
    pub layout: String,
    /// Data file name, relative to the sidecar.
    pub data: String,
}

/// Writes `<stem>.bin` and `<stem>.json`; returns the sidecar path.
pub fn write_snapshot(stem: &Path, field: &Field2D, t: f64, sigma: f64) -> Result<PathBuf> {
    let bin = stem.with_extension("bin");
    let json = stem.with_extension("json");
    let mut bytes = Vec::with_capacity(field.values.len() * 16);
    for z in &field.values {
        bytes.extend_from_slice(&z.re.to_le_bytes());
        bytes.extend_from_slice(&z.im.to_le_bytes());
    }
    fs::write(&bin, bytes).map_err(|e| Error::io(&bin, e))?;
    let meta = SnapshotMeta {
        schema_version: SNAPSHOT_SCHEMA,
        cells: field.grid.cells,
        n: field.grid.points_per_cell,
        epsilon: field.grid.epsilon,
        t,
        sigma,
        byte_order: "LE".into(),
        layout: "row-major-interleaved".into(),
        data: bin
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
    };
    let text = serde_json::to_string_pretty(&meta).map_err(|e| Error::Serialize(e.to_string()))?;
    fs::write(&json, text).map_err(|e| Error::io(&json, e))?;
    Ok(json)
}

/// Reads a snapshot from its sidecar, refusing unknown schema versions.
pub fn read_snapshot(sidecar: &Path) -> Result<(SnapshotMeta, Vec<Complex64>)> {
    let text = fs::read_to_string(sidecar).map_err(|e| Error::io(sidecar, e))?;
    let meta: SnapshotMeta = serde_json::from_str(&text).map_err(|e| Error::Serialize(e.to_string()))?;
    if meta.schema_version != SNAPSHOT_SCHEMA {
        return Err(Error::InvalidInput(format!(
            "snapshot schema version {} is not supported (expected {SNAPSHOT_SCHEMA})",
            meta.schema_version
        )));
    }
    if meta.byte_order != "LE" || meta.layout != "row-major-interleaved" {
        return Err(Error::InvalidInput(format!(
            "unsupported snapshot encoding {} / {}",
            meta.byte_order, meta.layout
        )));
    }
    let bin = sidecar.with_file_name(&meta.data);
    let bytes = fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
    let side = meta.cells * meta.n;
    if bytes.len() != side * side * 16 {
        return Err(Error::GridMismatch(format!(
            "{} bytes in {}, expected {} for a {side}x{side} grid",
            bytes.len(),
            bin.display(),
            side * side * 16
        )));
    }
    let values = bytes
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().expect("8 bytes"));
            let im = f64::from_le_bytes(c[8..].try_into().expect("8 bytes"));
            Complex64::new(re, im)
        })
        .collect();
    Ok((meta, values))
}
