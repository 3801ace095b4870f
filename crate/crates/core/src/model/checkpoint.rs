//! Versioned checkpoint container: magic, version, a JSON manifest mapping
//! parameter paths to shape/dtype/offset, then little-endian raw arrays.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::{layout, ModelParams};
use super::tensor::{Matrix, Scalar};
use super::train::OptimizerState;
use super::ModelConfig;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"POSLABCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct Checkpoint<F> {
    pub config: ModelConfig,
    pub params: ModelParams<F>,
    pub optimizer: OptimizerState<F>,
    pub step: u64,
    pub rng_state: Vec<u8>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    config: ModelConfig,
    step: u64,
    optimizer_step: u64,
    rng_state: String,
    entries: Vec<Entry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Entry {
    path: String,
    shape: [usize; 2],
    dtype: String,
    offset: usize,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn unhex(s: &str) -> Result<Vec<u8>> {
    if !s.len().is_multiple_of(2) {
        return Err(Error::Checkpoint("odd-length rng_state".into()));
    }
    (0..s.len())
        .step_by(2)
        .map(|i| u8::from_str_radix(&s[i..i + 2], 16).map_err(|_| Error::Checkpoint("bad rng_state hex".into())))
        .collect()
}

impl<F: Scalar> Checkpoint<F> {
    fn arrays(&self) -> Vec<(String, &Matrix<F>)> {
        let names = &self.params.names;
        let mut out: Vec<(String, &Matrix<F>)> = names.iter().cloned().zip(&self.params.tensors).collect();
        out.extend(names.iter().map(|n| format!("adam.m/{n}")).zip(&self.optimizer.m));
        out.extend(names.iter().map(|n| format!("adam.v/{n}")).zip(&self.optimizer.v));
        out
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let arrays = self.arrays();
        let mut entries = Vec::with_capacity(arrays.len());
        let mut offset = 0;
        for (path, m) in &arrays {
            entries.push(Entry {
                path: path.clone(),
                shape: [m.rows, m.cols],
                dtype: F::DTYPE.into(),
                offset,
            });
            offset += m.len() * F::BYTES;
        }
        let manifest = Manifest {
            config: self.config.clone(),
            step: self.step,
            optimizer_step: self.optimizer.step,
            rng_state: hex(&self.rng_state),
            entries,
        };
        let json = serde_json::to_vec(&manifest)?;
        let mut out = Vec::with_capacity(20 + json.len() + offset);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, m) in arrays {
            for &x in &m.data {
                x.write_le(&mut out);
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let corrupt = |m: &str| Error::Checkpoint(m.to_string());
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(corrupt("not a checkpoint file"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "checkpoint version {version} is not supported (expected {CHECKPOINT_VERSION})"
            )));
        }
        let mlen = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let data_start = 20usize.checked_add(mlen).filter(|&e| e <= bytes.len()).ok_or_else(|| corrupt("truncated manifest"))?;
        let manifest: Manifest =
            serde_json::from_slice(&bytes[20..data_start]).map_err(|e| Error::Checkpoint(format!("bad manifest: {e}")))?;
        let data = &bytes[data_start..];

        let (lay, slots) = layout(&manifest.config);
        let n = slots.len();
        if manifest.entries.len() != 3 * n {
            return Err(corrupt("entry count does not match the architecture"));
        }
        let mut arrays = Vec::with_capacity(3 * n);
        let mut expected_offset = 0;
        for (i, e) in manifest.entries.iter().enumerate() {
            let slot = &slots[i % n];
            let want = match i / n {
                0 => slot.name.clone(),
                1 => format!("adam.m/{}", slot.name),
                _ => format!("adam.v/{}", slot.name),
            };
            if e.path != want || e.shape != [slot.rows, slot.cols] || e.dtype != F::DTYPE || e.offset != expected_offset {
                return Err(Error::Checkpoint(format!("unexpected entry {}", e.path)));
            }
            let len = slot.rows * slot.cols;
            let end = e.offset + len * F::BYTES;
            let raw = data.get(e.offset..end).ok_or_else(|| corrupt("truncated array data"))?;
            let vals = raw.chunks_exact(F::BYTES).map(F::read_le).collect();
            arrays.push(Matrix::from_vec(slot.rows, slot.cols, vals));
            expected_offset = end;
        }
        if expected_offset != data.len() {
            return Err(corrupt("trailing bytes after array data"));
        }
        let v = arrays.split_off(2 * n);
        let m = arrays.split_off(n);
        Ok(Checkpoint {
            params: ModelParams {
                names: slots.into_iter().map(|s| s.name).collect(),
                tensors: arrays,
                layout: lay,
            },
            optimizer: OptimizerState {
                m,
                v,
                step: manifest.optimizer_step,
            },
            config: manifest.config,
            step: manifest.step,
            rng_state: unhex(&manifest.rng_state)?,
        })
    }
}

pub fn save_checkpoint<F: Scalar>(ck: &Checkpoint<F>, path: &Path) -> Result<()> {
    let bytes = ck.to_bytes()?;
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, &bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<F: Scalar>(path: &Path) -> Result<Checkpoint<F>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}
