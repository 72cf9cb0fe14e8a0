//! Checkpoint directories: `manifest.json` (name, shape, dtype, byte offset
//! per entry), `params.bin` (little-endian values), `config.json` and
//! `history.jsonl`.

use std::fs;
use std::path::Path;

use ndarray::ArrayD;
use serde::{Deserialize, Serialize};

use super::MetricRecord;
use crate::config::{ModelConfig, TrainConfig};
use crate::error::{Error, Result};
use crate::nn::ParameterStore;
use crate::scalar::Scalar;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const PARAMS_FILE: &str = "params.bin";
pub const CONFIG_FILE: &str = "config.json";
pub const HISTORY_FILE: &str = "history.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    pub offset: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
    pub total_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub model: ModelConfig,
    pub train: Option<TrainConfig>,
    pub iteration: u64,
}

#[derive(Debug, Clone)]
pub struct Checkpoint<T> {
    pub params: ParameterStore<T>,
    pub meta: CheckpointMeta,
    pub history: Vec<MetricRecord>,
}

impl<T: Scalar> Checkpoint<T> {
    /// Fails with `CorruptCheckpoint` naming the first entry whose name or
    /// shape differs from `expected`.
    pub fn check_layout(&self, expected: &ParameterStore<T>) -> Result<()> {
        expected
            .check_layout(&self.params)
            .map_err(Error::CorruptCheckpoint)
    }
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => {
            Error::CorruptCheckpoint(format!("missing {}", path.display()))
        }
        _ => Error::io(path, e),
    })
}

pub fn save_checkpoint<T: Scalar>(ckpt: &Checkpoint<T>, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut bytes = Vec::with_capacity(ckpt.params.num_values() * T::BYTES);
    let mut entries = Vec::with_capacity(ckpt.params.len());
    for e in ckpt.params.entries() {
        entries.push(ManifestEntry {
            name: e.name.clone(),
            shape: e.value.shape().to_vec(),
            dtype: T::DTYPE.to_owned(),
            offset: bytes.len() as u64,
        });
        for &v in e.value.iter() {
            v.write_le(&mut bytes);
        }
    }
    let manifest = Manifest {
        entries,
        total_bytes: bytes.len() as u64,
    };
    write(&dir.join(PARAMS_FILE), &bytes)?;
    write(
        &dir.join(MANIFEST_FILE),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    write(
        &dir.join(CONFIG_FILE),
        serde_json::to_string_pretty(&ckpt.meta)?,
    )?;
    let mut hist = String::new();
    for r in &ckpt.history {
        hist.push_str(&serde_json::to_string(r)?);
        hist.push('\n');
    }
    write(&dir.join(HISTORY_FILE), hist)
}

pub fn load_checkpoint<T: Scalar>(dir: &Path) -> Result<Checkpoint<T>> {
    let corrupt = |m: String| Error::CorruptCheckpoint(format!("{}: {m}", dir.display()));
    let manifest: Manifest = serde_json::from_slice(&read(&dir.join(MANIFEST_FILE))?)
        .map_err(|e| corrupt(format!("manifest: {e}")))?;
    let bytes = read(&dir.join(PARAMS_FILE))?;
    if bytes.len() as u64 != manifest.total_bytes {
        return Err(corrupt(format!(
            "params.bin has {} bytes, manifest says {}",
            bytes.len(),
            manifest.total_bytes
        )));
    }
    let mut params = ParameterStore::new();
    let mut expected_offset = 0u64;
    for e in &manifest.entries {
        if e.dtype != T::DTYPE {
            return Err(corrupt(format!(
                "entry `{}` has dtype {}, expected {}",
                e.name,
                e.dtype,
                T::DTYPE
            )));
        }
        if e.offset != expected_offset {
            return Err(corrupt(format!(
                "entry `{}` has offset {}, expected {expected_offset}",
                e.name, e.offset
            )));
        }
        let n: usize = e.shape.iter().product();
        let start = e.offset as usize;
        let end = start + n * T::BYTES;
        if end > bytes.len() {
            return Err(corrupt(format!(
                "entry `{}` with shape {:?} overruns params.bin",
                e.name, e.shape
            )));
        }
        let values: Vec<T> = bytes[start..end]
            .chunks_exact(T::BYTES)
            .map(T::read_le)
            .collect();
        let arr = ArrayD::from_shape_vec(e.shape.clone(), values).expect("sized above");
        params
            .insert(e.name.clone(), arr)
            .map_err(|err| corrupt(err.to_string()))?;
        expected_offset = end as u64;
    }
    if expected_offset != manifest.total_bytes {
        return Err(corrupt("manifest entries do not cover params.bin".into()));
    }
    let meta: CheckpointMeta = serde_json::from_slice(&read(&dir.join(CONFIG_FILE))?)
        .map_err(|e| corrupt(format!("config: {e}")))?;
    let hist_path = dir.join(HISTORY_FILE);
    let mut history = Vec::new();
    if hist_path.exists() {
        let text = String::from_utf8(read(&hist_path)?).map_err(|e| corrupt(e.to_string()))?;
        for line in text.lines().filter(|l| !l.is_empty()) {
            history.push(serde_json::from_str(line).map_err(|e| corrupt(format!("history: {e}")))?);
        }
    }
    Ok(Checkpoint {
        params,
        meta,
        history,
    })
}
