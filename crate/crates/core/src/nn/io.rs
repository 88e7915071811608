//! Weight files: `u32` little-endian header length, a JSON header describing the
//! architecture, then every tensor as little-endian `f32` in declaration order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{architecture, HeadKind, ModelParams};
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;

pub const WEIGHTS_FORMAT: &str = "suction-weights";
pub const WEIGHTS_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsHeader {
    pub format: String,
    pub version: u32,
    pub architecture: String,
    pub head: HeadKind,
    pub seed: u64,
    pub dtype: String,
    pub tensors: Vec<TensorEntry>,
}

pub const ARCHITECTURE_TAG: &str = "two-stream-conv-v1";

pub fn encode(params: &ModelParams<f32>) -> Vec<u8> {
    let header = WeightsHeader {
        format: WEIGHTS_FORMAT.into(),
        version: WEIGHTS_VERSION,
        architecture: ARCHITECTURE_TAG.into(),
        head: params.head,
        seed: params.seed,
        dtype: "f32le".into(),
        tensors: architecture(params.head)
            .into_iter()
            .map(|(name, shape)| TensorEntry { name: name.into(), shape })
            .collect(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(4 + json.len() + 4 * params.num_params());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for v in params.tensors.iter().flatten() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<ModelParams<f32>> {
    let corrupt = |reason: String| Error::CorruptHeader { path: path.to_path_buf(), reason };
    if bytes.len() < 4 {
        return Err(corrupt("missing header length".into()));
    }
    let hlen = u32::from_le_bytes(bytes[..4].try_into().unwrap()) as usize;
    let json = bytes.get(4..4 + hlen).ok_or_else(|| corrupt("header length exceeds file".into()))?;
    let header: WeightsHeader = serde_json::from_slice(json).map_err(|e| corrupt(e.to_string()))?;
    if header.format != WEIGHTS_FORMAT || header.version != WEIGHTS_VERSION || header.dtype != "f32le" {
        return Err(corrupt(format!("unsupported format {} v{} {}", header.format, header.version, header.dtype)));
    }
    if header.architecture != ARCHITECTURE_TAG {
        return Err(corrupt(format!("unknown architecture {}", header.architecture)));
    }
    let expected = architecture(header.head);
    if header.tensors.len() != expected.len()
        || header.tensors.iter().zip(&expected).any(|(t, (n, s))| t.name != *n || t.shape != *s)
    {
        return Err(corrupt("tensor table does not match architecture".into()));
    }
    let payload = &bytes[4 + hlen..];
    let count: usize = expected.iter().map(|(_, s)| s.iter().product::<usize>()).sum();
    if payload.len() != 4 * count {
        return Err(Error::TruncatedPayload { path: path.to_path_buf(), expected: 4 * count, found: payload.len() });
    }
    let mut floats = payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()));
    let tensors = expected
        .iter()
        .map(|(_, s)| floats.by_ref().take(s.iter().product()).collect())
        .collect();
    Ok(ModelParams { head: header.head, seed: header.seed, tensors })
}

pub fn save(params: &ModelParams<f32>, path: &Path) -> Result<()> {
    write_atomic(path, &encode(params))
}

pub fn load(path: &Path) -> Result<ModelParams<f32>> {
    let bytes = std::fs::read(path)?;
    decode(&bytes, path)
}
