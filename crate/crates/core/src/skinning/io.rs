//! Weight export: a little-endian binary block and a JSON form for small
//! meshes.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SkinWeights;
use crate::error::{Error, Result};

pub const WEIGHTS_MAGIC: [u8; 4] = *b"SKWT";

/// Writes `magic, N (u32), J (u32)` followed by `N*J` little-endian `f32`
/// values in row-major order.
pub fn write_weights_bin(weights: &SkinWeights, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::with_capacity(12 + 4 * weights.as_slice().len());
    buf.write_all(&WEIGHTS_MAGIC).unwrap();
    buf.extend_from_slice(&(weights.vertex_count() as u32).to_le_bytes());
    buf.extend_from_slice(&(weights.joint_count() as u32).to_le_bytes());
    for &w in weights.as_slice() {
        buf.extend_from_slice(&(w as f32).to_le_bytes());
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Reads a binary weight block. Rows are validated against the `f32`
/// rounding tolerance.
pub fn read_weights_bin(path: impl AsRef<Path>) -> Result<SkinWeights> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 12 || bytes[..4] != WEIGHTS_MAGIC {
        return Err(Error::Checkpoint("not a skinning weight file (bad magic)".into()));
    }
    let n = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let j = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let expected = 12 + 4 * n * j;
    if bytes.len() != expected {
        return Err(Error::Checkpoint(format!(
            "weight file has {} bytes, expected {expected}",
            bytes.len()
        )));
    }
    let data: Vec<f64> = bytes[12..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    let w = SkinWeights { rows: n, joints: j, data };
    w.check(1e-5)?;
    Ok(w)
}

#[derive(Serialize, Deserialize)]
struct WeightsJson {
    n: usize,
    j: usize,
    weights: Vec<Vec<f64>>,
}

pub fn weights_to_json(weights: &SkinWeights) -> String {
    serde_json::to_string(&WeightsJson {
        n: weights.vertex_count(),
        j: weights.joint_count(),
        weights: weights.rows().map(|r| r.to_vec()).collect(),
    })
    .expect("weights serialize")
}

pub fn read_weights_json(text: &str) -> Result<SkinWeights> {
    let parsed: WeightsJson = serde_json::from_str(text)?;
    if parsed.weights.len() != parsed.n {
        return Err(Error::DimensionMismatch {
            what: "weight rows",
            expected: parsed.n,
            got: parsed.weights.len(),
        });
    }
    let w = SkinWeights::from_rows(&parsed.weights)?;
    if w.joint_count() != parsed.j && parsed.n > 0 {
        return Err(Error::DimensionMismatch {
            what: "weight columns",
            expected: parsed.j,
            got: w.joint_count(),
        });
    }
    Ok(w)
}
