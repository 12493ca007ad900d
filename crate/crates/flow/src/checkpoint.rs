//! Versioned binary checkpoints: `"TDIT"`, `u32` version, `u32` header
//! length, JSON header, then every parameter as little-endian `f32` in
//! header order.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::model::{LoraConfig, ModelConfig, ParamStore, ToyDiT};
use crate::tensor::Mat;
use crate::FlowError;

pub const MAGIC: &[u8; 4] = b"TDIT";
pub const VERSION: u32 = 1;
const MAX_HEADER: u32 = 1 << 26;
const MAX_PARAM_VALUES: usize = 1 << 28;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub trainable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub config: ModelConfig,
    pub lora: Option<LoraConfig>,
    pub params: Vec<ParamEntry>,
    /// Free-form metadata such as the vocabulary and training settings.
    #[serde(default)]
    pub extra: serde_json::Value,
}

pub fn write_checkpoint<W: Write>(mut w: W, model: &ToyDiT, extra: serde_json::Value) -> Result<(), FlowError> {
    let header = Header {
        config: model.config.clone(),
        lora: model.lora,
        params: model
            .params
            .iter()
            .map(|p| ParamEntry {
                name: p.name.clone(),
                rows: p.value.rows,
                cols: p.value.cols,
                trainable: p.trainable,
            })
            .collect(),
        extra,
    };
    let json = serde_json::to_vec(&header)?;
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(json.len() as u32).to_le_bytes())?;
    w.write_all(&json)?;
    let mut blob = Vec::with_capacity(model.params.total_count() * 4);
    for p in model.params.iter() {
        for &v in &p.value.data {
            blob.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    w.write_all(&blob)?;
    Ok(())
}

fn bad(msg: impl Into<String>) -> FlowError {
    FlowError::Checkpoint(msg.into())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<(ToyDiT, serde_json::Value), FlowError> {
    let mut fixed = [0u8; 12];
    r.read_exact(&mut fixed).map_err(|_| bad("truncated preamble"))?;
    if &fixed[..4] != MAGIC {
        return Err(bad("bad magic"));
    }
    let version = u32::from_le_bytes(fixed[4..8].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let len = u32::from_le_bytes(fixed[8..12].try_into().expect("4 bytes"));
    if len > MAX_HEADER {
        return Err(bad(format!("header length {len} is implausible")));
    }
    let mut json = vec![0u8; len as usize];
    r.read_exact(&mut json).map_err(|_| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(&json).map_err(|e| bad(format!("header: {e}")))?;
    header.config.validate()?;

    let mut expected = ToyDiT::new(header.config.clone(), 0)?;
    if let Some(l) = header.lora {
        expected.attach_lora(l.rank, l.scale, 0)?;
    }
    if expected.params.len() != header.params.len() {
        return Err(bad(format!(
            "header lists {} parameters, configuration implies {}",
            header.params.len(),
            expected.params.len()
        )));
    }
    let mut params = ParamStore::default();
    let mut total = 0usize;
    for (entry, want) in header.params.iter().zip(expected.params.iter()) {
        if entry.name != want.name || (entry.rows, entry.cols) != want.value.shape() {
            return Err(bad(format!(
                "parameter {} ({}x{}) does not match expected {} {:?}",
                entry.name,
                entry.rows,
                entry.cols,
                want.name,
                want.value.shape()
            )));
        }
        let n = entry.rows * entry.cols;
        total += n;
        if total > MAX_PARAM_VALUES {
            return Err(bad("parameter blob is implausibly large"));
        }
        let mut bytes = vec![0u8; n * 4];
        r.read_exact(&mut bytes)
            .map_err(|_| bad(format!("truncated data for {}", entry.name)))?;
        let data: Vec<f64> = bytes
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
            .collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(bad(format!("non-finite values in {}", entry.name)));
        }
        params.push(entry.name.clone(), Mat::from_vec(entry.rows, entry.cols, data), entry.trainable);
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(bad("trailing bytes after parameter blob"));
    }
    Ok((
        ToyDiT {
            config: header.config,
            params,
            lora: header.lora,
        },
        header.extra,
    ))
}

pub fn save(path: impl AsRef<Path>, model: &ToyDiT, extra: serde_json::Value) -> Result<(), FlowError> {
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, model, extra)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<(ToyDiT, serde_json::Value), FlowError> {
    let bytes = std::fs::read(path)?;
    read_checkpoint(bytes.as_slice())
}

/// Rounds every parameter to `f32`, matching what a save/load cycle yields.
pub fn round_to_f32(model: &mut ToyDiT) {
    for i in 0..model.params.len() {
        for v in &mut model.params.get_mut(i).value.data {
            *v = f64::from(*v as f32);
        }
    }
}
