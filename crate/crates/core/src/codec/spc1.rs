//! `SPC1`: magic, `u32` rows, `u32` cols (little-endian), row-major `f32`
//! payload, then a `u32`-length-prefixed UTF-8 JSON block holding the norm
//! stats and codec config.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CodecConfig, ModelSpectrogram, NormStats};
use crate::error::{CoreError, Result};

pub const SPC1_MAGIC: &[u8; 4] = b"SPC1";
const MAX_CELLS: u64 = 1 << 26;

#[derive(Serialize, Deserialize)]
struct Meta {
    stats: NormStats,
    config: CodecConfig,
}

pub fn spec_to_bytes(m: &ModelSpectrogram) -> Vec<u8> {
    let meta = serde_json::to_vec(&Meta {
        stats: m.stats,
        config: m.config.clone(),
    })
    .expect("metadata serializes");
    let mut out = Vec::with_capacity(16 + m.data.len() * 4 + meta.len());
    out.extend_from_slice(SPC1_MAGIC);
    out.extend_from_slice(&(m.rows as u32).to_le_bytes());
    out.extend_from_slice(&(m.cols as u32).to_le_bytes());
    for v in &m.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    out.extend_from_slice(&meta);
    out
}

fn take<'a>(bytes: &'a [u8], at: &mut usize, n: usize, what: &str) -> Result<&'a [u8]> {
    let end = at
        .checked_add(n)
        .filter(|e| *e <= bytes.len())
        .ok_or_else(|| CoreError::format("SPC1", format!("truncated {what}")))?;
    let s = &bytes[*at..end];
    *at = end;
    Ok(s)
}

fn u32_at(bytes: &[u8], at: &mut usize, what: &str) -> Result<u32> {
    let s = take(bytes, at, 4, what)?;
    Ok(u32::from_le_bytes([s[0], s[1], s[2], s[3]]))
}

pub fn spec_from_bytes(bytes: &[u8]) -> Result<ModelSpectrogram> {
    if bytes.len() < 4 || &bytes[..4] != SPC1_MAGIC {
        return Err(CoreError::NotSpc1);
    }
    let mut at = 4;
    let rows = u32_at(bytes, &mut at, "header")? as u64;
    let cols = u32_at(bytes, &mut at, "header")? as u64;
    let cells = rows * cols;
    if cells == 0 || cells > MAX_CELLS {
        return Err(CoreError::format("SPC1", format!("dimensions {rows}x{cols} out of bounds")));
    }
    let payload = take(bytes, &mut at, cells as usize * 4, "payload")?;
    let data: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let meta_len = u32_at(bytes, &mut at, "metadata length")? as usize;
    let meta = take(bytes, &mut at, meta_len, "metadata")?;
    if at != bytes.len() {
        return Err(CoreError::format("SPC1", "trailing bytes after metadata"));
    }
    let meta: Meta = serde_json::from_slice(meta).map_err(|e| CoreError::format("SPC1", e.to_string()))?;
    ModelSpectrogram::new(rows as usize, cols as usize, data, meta.stats, meta.config)
}

pub fn write_spec(m: &ModelSpectrogram, path: &Path) -> Result<()> {
    std::fs::write(path, spec_to_bytes(m)).map_err(|e| CoreError::file(path, e))
}

pub fn read_spec(path: &Path) -> Result<ModelSpectrogram> {
    let bytes = std::fs::read(path).map_err(|e| CoreError::file(path, e))?;
    spec_from_bytes(&bytes)
}
