//! Versioned binary checkpoints.
//!
//! Layout: the magic bytes `HWCK`, a little-endian `u32` format version, a
//! little-endian `u64` header length, the JSON header, then every layer's
//! values as little-endian `f64` in header order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::engine::{Graph, NodeId, RmsProp, Tensor};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"HWCK";
pub const FORMAT_VERSION: u32 = 1;

/// Hex SHA-256 of the canonical JSON encoding of `config` (object keys sorted).
pub fn config_digest<T: Serialize>(config: &T) -> Result<String> {
    let value = serde_json::to_value(config).map_err(|e| Error::Parse(e.to_string()))?;
    let bytes = serde_json::to_vec(&value).map_err(|e| Error::Parse(e.to_string()))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

/// Named parameter tensors in a fixed order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Params {
    entries: Vec<(String, Tensor)>,
}

impl Params {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, value: Tensor) {
        self.entries.push((name.into(), value));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Tensor> {
        self.entries.iter().map(|(_, t)| t)
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| Error::Checkpoint(format!("missing layer {name:?}")))
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.entries.iter().map(|(_, t)| t.len()).collect()
    }

    /// Adds every tensor to `g` as a trainable leaf, or as a constant when
    /// `trainable` is false.
    pub fn attach(&self, g: &mut Graph, trainable: bool) -> Vec<NodeId> {
        self.entries
            .iter()
            .map(|(n, t)| if trainable { g.param(n, t.clone()) } else { g.constant(n, t.clone()) })
            .collect()
    }

    /// One optimizer step with gradients ordered like the parameters.
    pub fn apply(&mut self, optimizer: &mut RmsProp, grads: &[Vec<f64>]) -> Result<()> {
        let mut params: Vec<&mut [f64]> = self.entries.iter_mut().map(|(_, t)| t.data_mut()).collect();
        let grads: Vec<&[f64]> = grads.iter().map(Vec::as_slice).collect();
        optimizer.step(&mut params, &grads)
    }

    /// Checks names and shapes against `other`.
    pub fn check_layout(&self, other: &Params) -> Result<()> {
        let a: Vec<_> = self.entries.iter().map(|(n, t)| (n, t.shape())).collect();
        let b: Vec<_> = other.entries.iter().map(|(n, t)| (n, t.shape())).collect();
        if a != b {
            return Err(Error::Checkpoint("layer list does not match the configuration".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    kind: String,
    config: serde_json::Value,
    config_digest: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    extractor_digest: Option<String>,
    layers: Vec<LayerEntry>,
}

/// A model's configuration and parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub kind: String,
    pub config: serde_json::Value,
    pub config_digest: String,
    /// Digest of the checkpoint this one depends on, if any.
    pub extractor_digest: Option<String>,
    pub params: Params,
}

impl Checkpoint {
    pub fn new<C: Serialize>(kind: &str, config: &C, params: Params) -> Result<Self> {
        Ok(Self {
            kind: kind.to_string(),
            config: serde_json::to_value(config).map_err(|e| Error::Parse(e.to_string()))?,
            config_digest: config_digest(config)?,
            extractor_digest: None,
            params,
        })
    }

    /// Decodes the stored configuration.
    pub fn config<C: for<'de> Deserialize<'de>>(&self) -> Result<C> {
        serde_json::from_value(self.config.clone()).map_err(|e| Error::Checkpoint(format!("bad configuration: {e}")))
    }

    /// Digest over the full serialized checkpoint; identifies trained weights.
    pub fn digest(&self) -> Result<String> {
        Ok(Sha256::digest(self.to_bytes()?).iter().map(|b| format!("{b:02x}")).collect())
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.kind != kind {
            return Err(Error::Checkpoint(format!("expected a {kind} checkpoint, found {}", self.kind)));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            format_version: FORMAT_VERSION,
            kind: self.kind.clone(),
            config: self.config.clone(),
            config_digest: self.config_digest.clone(),
            extractor_digest: self.extractor_digest.clone(),
            layers: self
                .params
                .entries
                .iter()
                .map(|(n, t)| LayerEntry {
                    name: n.clone(),
                    shape: t.shape().to_vec(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| Error::Parse(e.to_string()))?;
        let mut out = Vec::with_capacity(16 + json.len() + 8 * self.params.count());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for t in self.params.tensors() {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |msg: &str| Error::Checkpoint(msg.to_string());
        if bytes.len() < 16 || &bytes[..4] != MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported format version {version}")));
        }
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let body = bytes.get(16..).ok_or_else(|| bad("truncated header"))?;
        if body.len() < header_len {
            return Err(bad("truncated header"));
        }
        let header: Header =
            serde_json::from_slice(&body[..header_len]).map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
        if header.format_version != version {
            return Err(bad("header version disagrees with the file version"));
        }
        if config_digest(&header.config)? != header.config_digest {
            return Err(bad("configuration digest mismatch"));
        }
        let mut data = &body[header_len..];
        let mut params = Params::new();
        for layer in &header.layers {
            let n: usize = layer.shape.iter().product();
            if data.len() < 8 * n {
                return Err(Error::Checkpoint(format!("truncated parameters for {}", layer.name)));
            }
            let values = data[..8 * n]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            params.push(layer.name.clone(), Tensor::new(&layer.shape, values)?);
            data = &data[8 * n..];
        }
        if !data.is_empty() {
            return Err(bad("trailing bytes after the last layer"));
        }
        Ok(Self {
            kind: header.kind,
            config: header.config,
            config_digest: header.config_digest,
            extractor_digest: header.extractor_digest,
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
