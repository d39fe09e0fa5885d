//! Checkpoint container: versioned named parameter tensors (f32
//! little-endian, like the feature format) plus a config/vocab JSON header.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic  b"ATMC"
//! version u16
//! meta_len u32, meta JSON (config, vocab, provenance)
//! n_params u32
//! per parameter, sorted by name:
//!     name_len u16, name bytes, rows u32, cols u32, rows*cols f32
//! crc32 u32 over every byte after the version
//! ```

use super::{ModelConfig, Vocab};
use crate::error::{CoreError, Result};
use crate::params::{ParamSet, Provenance};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

pub const ATMC_MAGIC: &[u8; 4] = b"ATMC";
pub const ATMC_VERSION: u16 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub config: ModelConfig,
    pub vocab: Vec<String>,
    pub provenance: Provenance,
    pub seed: u64,
}

impl CheckpointMeta {
    pub fn vocab(&self) -> Vocab {
        Vocab::from_tokens(self.vocab.clone())
    }
}

fn format_err(offset: u64, msg: impl Into<String>) -> CoreError {
    CoreError::Format {
        offset,
        msg: msg.into(),
    }
}

pub fn save_checkpoint(path: &Path, params: &ParamSet, meta: &CheckpointMeta) -> Result<()> {
    let meta_json = serde_json::to_vec(meta).map_err(|e| CoreError::Json {
        line: None,
        source: e,
    })?;
    let mut payload = Vec::new();
    payload.extend_from_slice(&(meta_json.len() as u32).to_le_bytes());
    payload.extend_from_slice(&meta_json);
    payload.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, tensor) in params.iter() {
        let (rows, cols) = tensor.dims2()?;
        payload.extend_from_slice(&(name.len() as u16).to_le_bytes());
        payload.extend_from_slice(name.as_bytes());
        payload.extend_from_slice(&(rows as u32).to_le_bytes());
        payload.extend_from_slice(&(cols as u32).to_le_bytes());
        for &v in tensor.data() {
            payload.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&payload);

    let mut file = std::fs::File::create(path).map_err(|e| CoreError::io(path, e))?;
    file.write_all(ATMC_MAGIC).map_err(|e| CoreError::io(path, e))?;
    file.write_all(&ATMC_VERSION.to_le_bytes())
        .map_err(|e| CoreError::io(path, e))?;
    file.write_all(&payload).map_err(|e| CoreError::io(path, e))?;
    file.write_all(&crc.to_le_bytes())
        .map_err(|e| CoreError::io(path, e))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(ParamSet, CheckpointMeta)> {
    let bytes = std::fs::read(path).map_err(|e| CoreError::io(path, e))?;
    let mut pos = 0usize;
    let take = |pos: &mut usize, n: usize, what: &str| -> Result<&[u8]> {
        if *pos + n > bytes.len() {
            return Err(format_err(*pos as u64, format!("truncated while reading {what}")));
        }
        let s = &bytes[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };

    if take(&mut pos, 4, "magic")? != ATMC_MAGIC {
        return Err(format_err(0, "bad magic, expected \"ATMC\""));
    }
    let ver = take(&mut pos, 2, "version")?;
    let version = u16::from_le_bytes([ver[0], ver[1]]);
    if version != ATMC_VERSION {
        return Err(format_err(4, format!("unsupported checkpoint version {version}")));
    }
    let payload_start = pos;

    let m = take(&mut pos, 4, "meta length")?;
    let meta_len = u32::from_le_bytes([m[0], m[1], m[2], m[3]]) as usize;
    let meta_bytes = take(&mut pos, meta_len, "meta json")?;
    let meta: CheckpointMeta = serde_json::from_slice(meta_bytes).map_err(|e| CoreError::Json {
        line: None,
        source: e,
    })?;

    let n = take(&mut pos, 4, "param count")?;
    let n_params = u32::from_le_bytes([n[0], n[1], n[2], n[3]]) as usize;
    let mut params = ParamSet::new();
    for _ in 0..n_params {
        let l = take(&mut pos, 2, "name length")?;
        let name_len = u16::from_le_bytes([l[0], l[1]]) as usize;
        let name = String::from_utf8(take(&mut pos, name_len, "name")?.to_vec())
            .map_err(|_| format_err(pos as u64, "parameter name is not utf-8"))?;
        let r = take(&mut pos, 4, "rows")?;
        let rows = u32::from_le_bytes([r[0], r[1], r[2], r[3]]) as usize;
        let c = take(&mut pos, 4, "cols")?;
        let cols = u32::from_le_bytes([c[0], c[1], c[2], c[3]]) as usize;
        let count = rows * cols;
        let raw = take(&mut pos, count * 4, "parameter data")?;
        let mut data = Vec::with_capacity(count);
        for i in 0..count {
            let v = f32::from_le_bytes([raw[4 * i], raw[4 * i + 1], raw[4 * i + 2], raw[4 * i + 3]]);
            if !v.is_finite() {
                return Err(format_err(
                    (pos - count * 4 + 4 * i) as u64,
                    format!("non-finite value in parameter '{name}'"),
                ));
            }
            data.push(v as f64);
        }
        params.insert(name, Tensor::matrix(rows, cols, data)?);
    }

    let crc_offset = pos;
    let s = take(&mut pos, 4, "crc32")?;
    let stored = u32::from_le_bytes([s[0], s[1], s[2], s[3]]);
    let computed = crc32fast::hash(&bytes[payload_start..crc_offset]);
    if stored != computed {
        return Err(format_err(
            crc_offset as u64,
            format!("crc mismatch: stored {stored:#010x}, computed {computed:#010x}"),
        ));
    }
    if pos != bytes.len() {
        return Err(format_err(pos as u64, "trailing bytes after crc"));
    }

    params.provenance = meta.provenance;
    Ok((params, meta))
}
