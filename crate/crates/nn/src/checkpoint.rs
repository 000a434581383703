//! `TNN1` container: magic, little-endian `u32` header length, a JSON
//! header naming each network's layer specs and tensor shapes, then every
//! network's parameters followed by its buffers as little-endian `f32`, in
//! declaration order.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{NnError, Result};
use crate::layer::{Initializer, Layer, LayerSpec};
use crate::registry::LayerRegistry;
use crate::sequential::Sequential;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"TNN1";
const MAX_HEADER: u32 = 64 << 20;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    version: u32,
    meta: serde_json::Value,
    networks: Vec<NetworkHeader>,
}

#[derive(Debug, Serialize, Deserialize)]
struct NetworkHeader {
    name: String,
    layers: Vec<LayerSpec>,
    tensors: Vec<Vec<usize>>,
}

fn state_shapes(net: &Sequential) -> Vec<Vec<usize>> {
    net.params()
        .iter()
        .map(|p| p.value.shape().to_vec())
        .chain(net.buffers().iter().map(|b| b.shape().to_vec()))
        .collect()
}

pub fn write_tnn1<W: Write>(mut w: W, meta: &serde_json::Value, networks: &[(&str, &Sequential)]) -> Result<()> {
    let header = Header {
        version: 1,
        meta: meta.clone(),
        networks: networks
            .iter()
            .map(|(name, net)| NetworkHeader {
                name: name.to_string(),
                layers: net.specs(),
                tensors: state_shapes(net),
            })
            .collect(),
    };
    let text = serde_json::to_vec(&header).map_err(|e| NnError::Checkpoint(e.to_string()))?;
    w.write_all(MAGIC)?;
    w.write_all(&(text.len() as u32).to_le_bytes())?;
    w.write_all(&text)?;
    let mut buf = Vec::new();
    for (_, net) in networks {
        let params = net.params();
        let tensors = params.iter().map(|p| &p.value).chain(net.buffers());
        for t in tensors {
            buf.clear();
            buf.extend(t.data().iter().flat_map(|v| v.to_le_bytes()));
            w.write_all(&buf)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Networks rebuilt from a `TNN1` stream, in stored order.
pub struct Loaded {
    pub meta: serde_json::Value,
    pub networks: Vec<(String, Sequential)>,
}

impl Loaded {
    pub fn take(&mut self, name: &str) -> Result<Sequential> {
        let idx = self
            .networks
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| NnError::Checkpoint(format!("network `{name}` missing")))?;
        Ok(self.networks.remove(idx).1)
    }
}

fn read_f32s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f32>> {
    let mut bytes = vec![0u8; n * 4];
    r.read_exact(&mut bytes)
        .map_err(|_| NnError::Checkpoint("truncated parameter payload".into()))?;
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

fn fill(dst: &mut Tensor, shape: &[usize], r: &mut impl Read) -> Result<()> {
    if dst.shape() != shape {
        return Err(NnError::Checkpoint(format!(
            "stored tensor shape {shape:?} does not match rebuilt {:?}",
            dst.shape()
        )));
    }
    let data = read_f32s(r, dst.len())?;
    dst.data_mut().copy_from_slice(&data);
    Ok(())
}

pub fn read_tnn1<R: Read>(mut r: R, registry: &LayerRegistry) -> Result<Loaded> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| NnError::Checkpoint("file too short for magic".into()))?;
    if &magic != MAGIC {
        return Err(NnError::Checkpoint("not a TNN1 file".into()));
    }
    let mut len = [0u8; 4];
    r.read_exact(&mut len)
        .map_err(|_| NnError::Checkpoint("truncated header length".into()))?;
    let len = u32::from_le_bytes(len);
    if len > MAX_HEADER {
        return Err(NnError::Checkpoint(format!("header length {len} is implausible")));
    }
    let mut text = vec![0u8; len as usize];
    r.read_exact(&mut text)
        .map_err(|_| NnError::Checkpoint("truncated header".into()))?;
    let header: Header = serde_json::from_slice(&text).map_err(|e| NnError::Checkpoint(format!("bad header: {e}")))?;
    if header.version != 1 {
        return Err(NnError::Checkpoint(format!("unsupported version {}", header.version)));
    }
    let mut networks = Vec::new();
    // Initialization is overwritten; the seed only has to be valid.
    let mut init = Initializer::new(0);
    for nh in header.networks {
        let mut net = registry.build_sequential(&nh.layers, &mut init)?.named(&nh.name);
        let n_params = net.params().len();
        if n_params + net.buffers().len() != nh.tensors.len() {
            return Err(NnError::Checkpoint(format!(
                "network `{}` declares {} tensors, architecture has {}",
                nh.name,
                nh.tensors.len(),
                n_params + net.buffers().len()
            )));
        }
        let mut shapes = nh.tensors.iter();
        for p in net.params_mut() {
            fill(&mut p.value, shapes.next().expect("counted"), &mut r)?;
        }
        for b in net.buffers_mut() {
            fill(b, shapes.next().expect("counted"), &mut r)?;
        }
        networks.push((nh.name, net));
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(NnError::Checkpoint("trailing bytes after payload".into()));
    }
    Ok(Loaded {
        meta: header.meta,
        networks,
    })
}
