//! Parameter checkpoint archive.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic          8 bytes   "AMPCKPT\0"
//! version        u32       FORMAT_VERSION
//! manifest_len   u64       byte length of the manifest
//! manifest       JSON      networks (layer names, sizes, activation tags),
//!                          free vectors, and a tensor table with offsets
//! data           f64 LE    every tensor, row-major, at its manifest offset
//! ```
//!
//! Tensor names are `<network>/<layer>.weight`, `<network>/<layer>.bias`
//! and `<vector>` for free vectors. Offsets count f64 elements from the start
//! of the data block.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::mlp::{Activation, Layer, ParamTree};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"AMPCKPT\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
struct LayerEntry {
    name: String,
    #[serde(rename = "in")]
    in_dim: usize,
    out: usize,
    activation: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
struct NetworkEntry {
    name: String,
    layers: Vec<LayerEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
struct VectorEntry {
    name: String,
    len: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
struct Manifest {
    format_version: u32,
    networks: Vec<NetworkEntry>,
    vectors: Vec<VectorEntry>,
    tensors: Vec<TensorEntry>,
}

/// Named networks plus named free vectors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    pub networks: Vec<(String, ParamTree)>,
    pub vectors: Vec<(String, Vec<f64>)>,
}

impl Checkpoint {
    pub fn network(&self, name: &str) -> Result<&ParamTree> {
        self.networks
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, p)| p)
            .ok_or_else(|| Error::Data(format!("checkpoint has no network `{name}`")))
    }

    pub fn vector(&self, name: &str) -> Result<&[f64]> {
        self.vectors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
            .ok_or_else(|| Error::Data(format!("checkpoint has no vector `{name}`")))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut tensors = Vec::new();
        let mut data: Vec<f64> = Vec::new();
        let mut networks = Vec::new();
        for (net_name, tree) in &self.networks {
            let mut layers = Vec::new();
            for layer in tree.layers() {
                layers.push(LayerEntry {
                    name: layer.name.clone(),
                    in_dim: layer.in_dim(),
                    out: layer.out_dim(),
                    activation: layer.activation.tag().to_string(),
                });
                tensors.push(TensorEntry {
                    name: format!("{net_name}/{}.weight", layer.name),
                    shape: vec![layer.out_dim(), layer.in_dim()],
                    offset: data.len(),
                });
                data.extend(layer.weight.iter());
                tensors.push(TensorEntry {
                    name: format!("{net_name}/{}.bias", layer.name),
                    shape: vec![layer.out_dim()],
                    offset: data.len(),
                });
                data.extend(layer.bias.iter());
            }
            networks.push(NetworkEntry { name: net_name.clone(), layers });
        }
        let mut vectors = Vec::new();
        for (name, v) in &self.vectors {
            vectors.push(VectorEntry { name: name.clone(), len: v.len() });
            tensors.push(TensorEntry { name: name.clone(), shape: vec![v.len()], offset: data.len() });
            data.extend(v.iter());
        }
        let manifest = Manifest { format_version: FORMAT_VERSION, networks, vectors, tensors };
        let manifest = serde_json::to_vec(&manifest).expect("manifest serializes");

        let mut out = Vec::with_capacity(20 + manifest.len() + 8 * data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(manifest.len() as u64).to_le_bytes());
        out.extend_from_slice(&manifest);
        for v in data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |msg: &str| Error::Data(format!("checkpoint: {msg}"));
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(bad("bad magic"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let mlen = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let body = bytes.get(20..20 + mlen).ok_or_else(|| bad("truncated manifest"))?;
        let manifest: Manifest = serde_json::from_slice(body).map_err(|e| bad(&e.to_string()))?;
        let raw = &bytes[20 + mlen..];
        if !raw.len().is_multiple_of(8) {
            return Err(bad("data block is not a whole number of f64"));
        }
        let data: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let tensor = |name: &str, len: usize| -> Result<&[f64]> {
            let t = manifest
                .tensors
                .iter()
                .find(|t| t.name == name)
                .ok_or_else(|| bad(&format!("missing tensor `{name}`")))?;
            if t.shape.iter().product::<usize>() != len {
                return Err(bad(&format!("tensor `{name}` has wrong size")));
            }
            data.get(t.offset..t.offset + len).ok_or_else(|| bad("tensor out of range"))
        };

        let mut networks = Vec::new();
        for net in &manifest.networks {
            let mut layers = Vec::new();
            for entry in &net.layers {
                let w = tensor(&format!("{}/{}.weight", net.name, entry.name), entry.out * entry.in_dim)?;
                let b = tensor(&format!("{}/{}.bias", net.name, entry.name), entry.out)?;
                layers.push(Layer {
                    name: entry.name.clone(),
                    weight: Array2::from_shape_vec((entry.out, entry.in_dim), w.to_vec())
                        .map_err(|e| Error::Shape(e.to_string()))?,
                    bias: Array1::from(b.to_vec()),
                    activation: Activation::from_tag(&entry.activation)?,
                });
            }
            networks.push((net.name.clone(), ParamTree::new(layers)?));
        }
        let mut vectors = Vec::new();
        for v in &manifest.vectors {
            vectors.push((v.name.clone(), tensor(&v.name, v.len)?.to_vec()));
        }
        Ok(Checkpoint { networks, vectors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}
