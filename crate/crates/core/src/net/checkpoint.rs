//! Single-file checkpoint container. Layout (all integers little-endian):
//!
//! ```text
//! magic        8 bytes   b"JZNETCKP"
//! version      u32
//! header_len   u32
//! header       header_len bytes of UTF-8 JSON (architecture + layer manifest)
//! payload      f64 values of every tensor, in manifest order
//! checksum     u32       CRC-32 of every preceding byte
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Arch, NetParams, Tensor};
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"JZNETCKP";

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    arch: Arch,
    layers: Vec<LayerEntry>,
}

#[derive(Serialize, Deserialize, PartialEq)]
struct LayerEntry {
    name: String,
    shape: Vec<usize>,
    is_bias: bool,
}

pub fn encode_checkpoint(params: &NetParams) -> Result<Vec<u8>> {
    params.validate()?;
    let header = Header {
        format_version: CHECKPOINT_VERSION,
        arch: params.arch.clone(),
        layers: params
            .tensors
            .iter()
            .map(|t| LayerEntry { name: t.name.clone(), shape: t.shape.clone(), is_bias: t.is_bias })
            .collect(),
    };
    let header = serde_json::to_vec(&header).map_err(|e| Error::Serialize(e.to_string()))?;
    let mut out = Vec::with_capacity(20 + header.len() + 8 * params.num_params());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    for t in &params.tensors {
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<NetParams> {
    let corrupt = |m: &str| Error::CorruptCheckpoint(m.to_string());
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(corrupt("missing magic bytes"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(Error::CheckpointVersion { expected: CHECKPOINT_VERSION, found: version });
    }
    let header_len = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let header_end = 16usize.checked_add(header_len).ok_or_else(|| corrupt("header length overflow"))?;
    if bytes.len() < header_end {
        return Err(corrupt("truncated header"));
    }
    let header: Header =
        serde_json::from_slice(&bytes[16..header_end]).map_err(|e| Error::CorruptCheckpoint(format!("header: {e}")))?;
    if header.format_version != CHECKPOINT_VERSION {
        return Err(Error::CheckpointVersion { expected: CHECKPOINT_VERSION, found: header.format_version });
    }
    header.arch.validate()?;
    let expected = header.arch.manifest();
    if expected.len() != header.layers.len() {
        return Err(Error::ShapeMismatch {
            tensor: "<layer count>".into(),
            expected: vec![expected.len()],
            got: vec![header.layers.len()],
        });
    }
    for ((name, shape, is_bias), entry) in expected.iter().zip(&header.layers) {
        if *name != entry.name || *shape != entry.shape || *is_bias != entry.is_bias {
            return Err(Error::ShapeMismatch { tensor: name.clone(), expected: shape.clone(), got: entry.shape.clone() });
        }
    }
    let total: usize = expected.iter().map(|(_, s, _)| s.iter().product::<usize>()).sum();
    let payload_bytes = bytes.len().saturating_sub(header_end + 4);
    if payload_bytes != 8 * total {
        return Err(Error::ShapeMismatch {
            tensor: "<payload>".into(),
            expected: vec![total],
            got: vec![payload_bytes / 8],
        });
    }
    let body_end = bytes.len() - 4;
    let stored = u32::from_le_bytes(bytes[body_end..].try_into().unwrap());
    if crc32fast::hash(&bytes[..body_end]) != stored {
        return Err(corrupt("checksum mismatch"));
    }
    let mut values = bytes[header_end..body_end].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let tensors = expected
        .into_iter()
        .map(|(name, shape, is_bias)| {
            let len = shape.iter().product();
            Tensor { name, shape, is_bias, data: values.by_ref().take(len).collect() }
        })
        .collect();
    let params = NetParams { arch: header.arch, tensors };
    params.validate()?;
    Ok(params)
}

/// Writes atomically via a temporary sibling file.
pub fn save_checkpoint(params: &NetParams, path: &Path) -> Result<()> {
    let bytes = encode_checkpoint(params)?;
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, &bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<NetParams> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
