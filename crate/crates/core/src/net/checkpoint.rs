//! Binary checkpoints: `TSPFCN01`, a little-endian u32 length, that many
//! bytes of JSON [`ArchConfig`], then every parameter tensor in declared
//! order as little-endian f32.

use std::fs;
use std::path::Path;

use super::model::{ArchConfig, FcnModel};
use super::tensor::Real;
use crate::{Error, Result};

pub const MAGIC: &[u8; 8] = b"TSPFCN01";

pub fn encode<T: Real>(model: &FcnModel<T>) -> Result<Vec<u8>> {
    let json = serde_json::to_vec(&model.config)?;
    let mut out = Vec::with_capacity(12 + json.len() + 4 * model.params.num_params());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, t) in model.params.tensors() {
        for v in t {
            out.extend_from_slice(&(v.f64() as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode<T: Real>(bytes: &[u8], source: &Path) -> Result<FcnModel<T>> {
    let bad = |reason: &str| Error::malformed(source, reason);
    if bytes.len() < 8 || &bytes[..8] != MAGIC {
        return Err(Error::Version(format!("{} is not a TSPFCN01 checkpoint", source.display())));
    }
    let len_bytes: [u8; 4] = bytes.get(8..12).ok_or_else(|| bad("truncated header"))?.try_into().expect("4 bytes");
    let json_end = 12 + u32::from_le_bytes(len_bytes) as usize;
    let json = bytes.get(12..json_end).ok_or_else(|| bad("truncated config"))?;
    let config: ArchConfig = serde_json::from_slice(json).map_err(|e| bad(&format!("config: {e}")))?;
    let mut model = FcnModel::<T>::init(config, 0)?;
    let mut cursor = json_end;
    for t in model.params.tensors_mut() {
        let end = cursor + 4 * t.len();
        let blob = bytes.get(cursor..end).ok_or_else(|| bad("truncated parameters"))?;
        for (v, chunk) in t.iter_mut().zip(blob.chunks_exact(4)) {
            *v = T::of(f32::from_le_bytes(chunk.try_into().expect("4 bytes")) as f64);
        }
        cursor = end;
    }
    if cursor != bytes.len() {
        return Err(bad("trailing bytes after parameters"));
    }
    Ok(model)
}

pub fn save_checkpoint<T: Real>(model: &FcnModel<T>, path: &Path) -> Result<()> {
    fs::write(path, encode(model)?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<T: Real>(path: &Path) -> Result<FcnModel<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}
