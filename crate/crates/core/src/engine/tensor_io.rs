//! Flat binary tensors with a JSON sidecar header.
//!
//! `<stem>.bin` holds little-endian `f64` values, path-major, then node, then
//! component. `<stem>.json` holds the [`TensorHeader`].

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorHeader {
    /// What the tensor holds, e.g. `states`, `increments`, `y`, `z`.
    pub kind: String,
    pub shape: Vec<usize>,
    pub seed: Option<u64>,
    /// Grid nodes `t_0 … t_n`.
    pub grid: Vec<f64>,
    pub dtype: String,
    pub layout: String,
}

impl TensorHeader {
    pub fn new(kind: impl Into<String>, shape: Vec<usize>, seed: Option<u64>, grid: &[f64]) -> Self {
        Self {
            kind: kind.into(),
            shape,
            seed,
            grid: grid.to_vec(),
            dtype: "f64-le".into(),
            layout: "row-major".into(),
        }
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn encode(data: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(data.len() * 8);
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<Vec<f64>> {
    if !bytes.len().is_multiple_of(8) {
        return Err(Error::invalid("tensor payload length is not a multiple of 8"));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

/// Writes through a temporary sibling and renames, so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Writes `<stem>.bin` and `<stem>.json` under `dir`; returns both paths.
pub fn write_tensor(dir: &Path, stem: &str, header: &TensorHeader, data: &[f64]) -> Result<(PathBuf, PathBuf)> {
    if header.len() != data.len() {
        return Err(Error::invalid(format!(
            "header shape {:?} does not match {} values",
            header.shape,
            data.len()
        )));
    }
    let bin = dir.join(format!("{stem}.bin"));
    let json = dir.join(format!("{stem}.json"));
    write_atomic(&bin, &encode(data))?;
    write_atomic(&json, &serde_json::to_vec_pretty(header)?)?;
    Ok((bin, json))
}

pub fn read_tensor(dir: &Path, stem: &str) -> Result<(TensorHeader, Vec<f64>)> {
    let header: TensorHeader = serde_json::from_slice(&fs::read(dir.join(format!("{stem}.json")))?)?;
    let data = decode(&fs::read(dir.join(format!("{stem}.bin")))?)?;
    if data.len() != header.len() {
        return Err(Error::invalid(format!(
            "tensor `{stem}` has {} values, header says {:?}",
            data.len(),
            header.shape
        )));
    }
    Ok((header, data))
}
