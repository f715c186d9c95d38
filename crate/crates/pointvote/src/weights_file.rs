//! `PVNW` weight files.
//!
//! Magic `PVNW`, format version (u32), length of a JSON header (u32), the
//! header itself (network config, position scale, normalization flag), a
//! CRC-32 of everything after it, then every tensor as little-endian `f32`
//! in declaration order.

use std::path::Path;

use pointvote_core::network::{NetworkConfig, Weights};
use serde::{Deserialize, Serialize};

use crate::error::{read_file, write_file, Error, Result};

const MAGIC: &[u8; 4] = b"PVNW";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    config: NetworkConfig,
    /// Whether positions are scaled to the unit sphere before the network.
    normalized: bool,
    position_scale: f64,
}

pub fn encode_weights(w: &Weights<f32>) -> Vec<u8> {
    let header = Header { config: w.config.clone(), normalized: w.position_scale != 1.0, position_scale: w.position_scale };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut body = Vec::with_capacity(4 * w.parameter_count());
    for t in w.tensors() {
        for x in t {
            body.extend_from_slice(&x.to_le_bytes());
        }
    }
    let mut out = Vec::with_capacity(16 + json.len() + body.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&crc32fast::hash(&body).to_le_bytes());
    out.extend_from_slice(&body);
    out
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum WeightsError {
    #[error("not a PVNW weights file")]
    Magic,
    #[error("unsupported weights format version {0}")]
    Version(u32),
    #[error("truncated weights file")]
    Truncated,
    #[error("bad header: {0}")]
    Header(String),
    #[error("checksum mismatch: file is corrupted")]
    Checksum,
    #[error("tensor data has {found} bytes, the configuration needs {expected}")]
    Size { found: usize, expected: usize },
    #[error(transparent)]
    Config(pointvote_core::Error),
}

pub fn decode_weights(bytes: &[u8]) -> std::result::Result<Weights<f32>, WeightsError> {
    let word = |at: usize| -> std::result::Result<u32, WeightsError> {
        Ok(u32::from_le_bytes(bytes.get(at..at + 4).ok_or(WeightsError::Truncated)?.try_into().expect("4 bytes")))
    };
    if bytes.get(..4) != Some(MAGIC) {
        return Err(WeightsError::Magic);
    }
    let version = word(4)?;
    if version != VERSION {
        return Err(WeightsError::Version(version));
    }
    let json_len = word(8)? as usize;
    let json = bytes.get(12..12 + json_len).ok_or(WeightsError::Truncated)?;
    let crc = word(12 + json_len)?;
    let body = &bytes[16 + json_len..];
    if crc32fast::hash(body) != crc {
        return Err(WeightsError::Checksum);
    }
    let header: Header = serde_json::from_slice(json).map_err(|e| WeightsError::Header(e.to_string()))?;
    if !(header.position_scale > 0.0 && header.position_scale.is_finite()) || header.normalized != (header.position_scale != 1.0) {
        return Err(WeightsError::Header("inconsistent position scale".into()));
    }
    let mut w = Weights::<f32>::zeros(&header.config, header.position_scale).map_err(WeightsError::Config)?;
    let expected = 4 * w.parameter_count();
    if body.len() != expected {
        return Err(WeightsError::Size { found: body.len(), expected });
    }
    let mut values = body.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")));
    for t in w.tensors_mut() {
        for x in t.iter_mut() {
            *x = values.next().expect("size checked");
        }
    }
    if !w.is_finite() {
        return Err(WeightsError::Header("non-finite weights".into()));
    }
    Ok(w)
}

pub fn write_weights(path: &Path, w: &Weights<f32>) -> Result<()> {
    write_file(path, &encode_weights(w))
}

/// Loads weights, checking the keypoint count against `keypoints` when
/// given.
pub fn read_weights(path: &Path, keypoints: Option<usize>) -> Result<Weights<f32>> {
    let bytes = read_file(path)?;
    let w = decode_weights(&bytes).map_err(|e| Error::format(path, e.to_string()))?;
    if let Some(k) = keypoints.filter(|&k| k != w.config.keypoints) {
        return Err(Error::Core(pointvote_core::Error::Config(format!(
            "{}: network predicts {} keypoints, model has {k}",
            path.display(),
            w.config.keypoints
        ))));
    }
    Ok(w)
}
