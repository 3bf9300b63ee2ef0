//! Model checkpoints.
//!
//! ```text
//! "ASSN" | version u32 | config_len u64 | config JSON
//!        | n_tensors u32 | { name_len u32 | name | ndim u32 | dims u64 * ndim | offset u64 } *
//!        | payload_len u64 | payload (f32 LE) | crc32(payload) u32
//! ```
//!
//! Offsets count bytes from the start of the payload.

use std::path::Path;

use assan_autograd::Tensor;

use super::{read_file, write_atomic, Reader};
use crate::error::{Error, Result};
use crate::model::{Assan, InitConfig, ModelConfig, ParamStore};

pub const MAGIC: &[u8; 4] = b"ASSN";
pub const VERSION: u32 = 1;

pub fn encode(model: &Assan) -> Result<Vec<u8>> {
    let config = serde_json::to_vec(&model.config)?;
    let store = &model.params;
    let mut out = Vec::with_capacity(64 + config.len() + 4 * store.count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(config.len() as u64).to_le_bytes());
    out.extend_from_slice(&config);
    out.extend_from_slice(&(store.len() as u32).to_le_bytes());
    let mut offset = 0u64;
    for (name, t) in store.names().iter().zip(store.tensors()) {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.ndim() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        out.extend_from_slice(&offset.to_le_bytes());
        offset += 4 * t.numel() as u64;
    }
    out.extend_from_slice(&offset.to_le_bytes());
    let start = out.len();
    for t in store.tensors() {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out[start..]);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

/// Configuration and named tensors of a decoded checkpoint.
#[derive(Clone, Debug)]
pub struct Decoded {
    pub config: ModelConfig,
    pub params: ParamStore<f32>,
}

pub fn decode(bytes: &[u8]) -> Result<Decoded> {
    let mut r = Reader::new(bytes);
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::format(0, "not a checkpoint (bad magic)"));
    }
    let at = r.offset();
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::format(at, format!("unsupported checkpoint version {version}")));
    }
    let n = r.len("config")?;
    let at = r.offset();
    let config: ModelConfig = serde_json::from_slice(r.take(n, "config")?)
        .map_err(|e| Error::format(at, format!("bad config JSON: {e}")))?;
    let count = r.u32("tensor count")? as usize;
    let mut table = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        let len = r.u32("name length")? as usize;
        let at = r.offset();
        let name = std::str::from_utf8(r.take(len, "name")?)
            .map_err(|_| Error::format(at, "tensor name is not UTF-8"))?
            .to_owned();
        let ndim = r.u32("ndim")? as usize;
        let mut dims = Vec::with_capacity(ndim.min(8));
        for _ in 0..ndim {
            dims.push(r.u64("dims")? as usize);
        }
        let offset = r.u64("offset")?;
        table.push((name, dims, offset));
    }
    let payload_len = r.len("payload")?;
    let start = r.offset();
    let payload = r.take(payload_len, "payload")?;
    let at = r.offset();
    let crc = r.u32("crc")?;
    if r.remaining() != 0 {
        return Err(Error::format(r.offset(), "trailing bytes after checkpoint"));
    }
    if crc32fast::hash(payload) != crc {
        return Err(Error::format(at, "payload CRC mismatch"));
    }
    let mut params = ParamStore::default();
    for (name, dims, offset) in table {
        let numel: usize = dims.iter().product();
        let end = offset
            .checked_add(4 * numel as u64)
            .filter(|&e| e <= payload_len as u64)
            .ok_or_else(|| Error::format(start + offset, format!("tensor {name} overruns payload")))?;
        let data = payload[offset as usize..end as usize]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let t = Tensor::new(&dims, data)
            .map_err(|e| Error::format(start + offset, format!("tensor {name}: {e}")))?;
        if params.id_of(&name).is_some() {
            return Err(Error::format(start + offset, format!("duplicate tensor {name}")));
        }
        params.add(name, t);
    }
    Ok(Decoded { config, params })
}

/// Builds a fresh network for `config` and fills it from `decoded`; every
/// tensor the configuration implies must be present with matching shape.
pub fn restore(decoded: &Decoded, config: &ModelConfig) -> Result<Assan> {
    let mut model = Assan::new(config.clone(), InitConfig::standard(0))?;
    for (name, t) in model.params.names().iter().zip(model.params.tensors()) {
        match decoded.params.by_name(name) {
            None => return Err(Error::Incompatible(format!("missing tensor {name}"))),
            Some(src) if src.shape() != t.shape() => {
                return Err(Error::Incompatible(format!(
                    "tensor {name}: configuration needs shape {:?}, checkpoint has {:?}",
                    t.shape(),
                    src.shape()
                )))
            }
            Some(_) => {}
        }
    }
    model.params.load_from(&decoded.params)?;
    Ok(model)
}

pub fn checkpoint_save(path: &Path, model: &Assan) -> Result<()> {
    write_atomic(path, &encode(model)?)
}

/// Loads a checkpoint with the configuration stored inside it.
pub fn checkpoint_load(path: &Path) -> Result<Assan> {
    let decoded = decode(&read_file(path)?)?;
    restore(&decoded, &decoded.config)
}

/// Loads a checkpoint into the network described by `config`.
pub fn checkpoint_load_as(path: &Path, config: &ModelConfig) -> Result<Assan> {
    let decoded = decode(&read_file(path)?)?;
    restore(&decoded, config)
}
