//! Versioned binary checkpoints.
//!
//! Layout: 8-byte magic, `u32` version, `u64` header length, a JSON header
//! describing every tensor, then the raw little-endian `f64` payload in
//! header order (parameters first, then the Adam moments `m` and `v`).

use std::collections::BTreeMap;
use std::path::Path;

use accentvc_tensor::{AdamState, Tensor};
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::{Error, Result};
use crate::model::AccentVcModel;

use super::step::Optimizers;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"AVCCKPT\n";
pub const CHECKPOINT_VERSION: u32 = 1;
const PREAMBLE: usize = 8 + 4 + 8;

#[derive(Serialize, Deserialize)]
struct Header {
    iteration: u64,
    config: String,
    params: Vec<TensorEntry>,
    optim: Vec<OptimEntry>,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct OptimEntry {
    optimizer: String,
    name: String,
    step: u64,
    shape: Vec<usize>,
}

/// Model, optimizer state and the number of completed iterations.
pub struct TrainingState {
    pub model: AccentVcModel,
    pub optimizers: Optimizers,
    pub iteration: u64,
}

pub fn encode_checkpoint(model: &AccentVcModel, opt: &Optimizers, iteration: u64) -> Vec<u8> {
    let mut payload: Vec<f64> = Vec::with_capacity(model.store.numel());
    let mut params = Vec::with_capacity(model.store.len());
    for (_, p) in model.store.iter() {
        params.push(TensorEntry {
            name: p.name.clone(),
            shape: p.value.shape().to_vec(),
        });
        payload.extend_from_slice(p.value.data());
    }
    let mut optim = Vec::new();
    for (oname, o) in opt.named() {
        for (id, st) in o.state() {
            optim.push(OptimEntry {
                optimizer: oname.to_string(),
                name: model.store.get(*id).name.clone(),
                step: st.step,
                shape: st.m.shape().to_vec(),
            });
            payload.extend_from_slice(st.m.data());
            payload.extend_from_slice(st.v.data());
        }
    }
    let header = Header {
        iteration,
        config: model.config.to_toml_string(),
        params,
        optim,
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(PREAMBLE + json.len() + payload.len() * 8);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for x in payload {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8], path: &Path) -> Result<TrainingState> {
    let corrupt = |reason: String| Error::CorruptFile {
        path: path.to_path_buf(),
        reason,
    };
    if bytes.len() < PREAMBLE {
        return Err(corrupt(format!("{} bytes is too short for a checkpoint", bytes.len())));
    }
    if &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(corrupt("bad magic".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let hlen = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let body = &bytes[PREAMBLE..];
    if hlen > body.len() {
        return Err(corrupt(format!("header of {hlen} bytes runs past end of file")));
    }
    let header: Header =
        serde_json::from_slice(&body[..hlen]).map_err(|e| corrupt(format!("bad header: {e}")))?;
    let raw = &body[hlen..];
    let numel = |s: &[usize]| s.iter().product::<usize>();
    let expected: usize = header.params.iter().map(|e| numel(&e.shape)).sum::<usize>()
        + header.optim.iter().map(|e| 2 * numel(&e.shape)).sum::<usize>();
    if raw.len() != expected * 8 {
        return Err(corrupt(format!(
            "payload has {} bytes, header describes {}",
            raw.len(),
            expected * 8
        )));
    }
    let mut values = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let mut take = |shape: &[usize]| Tensor::new(shape, values.by_ref().take(numel(shape)).collect());

    let config = Config::from_toml_str(&header.config)?;
    let mut model = AccentVcModel::new(config, 0)?;
    if header.params.len() != model.store.len() {
        return Err(Error::Incompatible(format!(
            "checkpoint has {} parameters, model has {}",
            header.params.len(),
            model.store.len()
        )));
    }
    for e in &header.params {
        let id = model
            .store
            .id(&e.name)
            .ok_or_else(|| Error::Incompatible(format!("unknown parameter {}", e.name)))?;
        if model.store.value(id).shape() != e.shape.as_slice() {
            return Err(Error::Incompatible(format!(
                "parameter {} has shape {:?}, model expects {:?}",
                e.name,
                e.shape,
                model.store.value(id).shape()
            )));
        }
        *model.store.value_mut(id) = take(&e.shape);
    }
    let mut optimizers = Optimizers::new(&model.config.train);
    let mut states: BTreeMap<String, BTreeMap<_, AdamState>> = BTreeMap::new();
    for e in &header.optim {
        let id = model
            .store
            .id(&e.name)
            .filter(|id| model.store.value(*id).shape() == e.shape.as_slice())
            .ok_or_else(|| Error::Incompatible(format!("optimizer state for unknown parameter {}", e.name)))?;
        let m = take(&e.shape);
        let v = take(&e.shape);
        states
            .entry(e.optimizer.clone())
            .or_default()
            .insert(id, AdamState { step: e.step, m, v });
    }
    for (name, st) in states {
        optimizers
            .by_name_mut(&name)
            .ok_or_else(|| Error::Incompatible(format!("unknown optimizer {name}")))?
            .set_state(st);
    }
    Ok(TrainingState {
        model,
        optimizers,
        iteration: header.iteration,
    })
}

/// Write via a temporary file and rename, so a crash never leaves a
/// half-written checkpoint under `path`.
pub fn save_checkpoint(path: &Path, model: &AccentVcModel, opt: &Optimizers, iteration: u64) -> Result<()> {
    let bytes = encode_checkpoint(model, opt, iteration);
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<TrainingState> {
    decode_checkpoint(&std::fs::read(path)?, path)
}
