//! Model files.
//!
//! Layout: magic `CPM1`, one version byte, a little-endian `u32` header
//! length, a JSON header (network config, seed, tensor shapes), then every
//! tensor as little-endian `f32` in header order.

use std::path::Path;

use curvematch_core::net::{ConvParams, EmbeddingNet, NetConfig};
use serde::{Deserialize, Serialize};

use crate::error::{self, Error, Result};

pub const MAGIC: &[u8; 4] = b"CPM1";
pub const VERSION: u8 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelHeader {
    pub config: NetConfig,
    pub seed: u64,
    pub tensors: Vec<TensorInfo>,
}

fn header_of(net: &EmbeddingNet) -> ModelHeader {
    let mut tensors = Vec::new();
    for (i, c) in net.convs().iter().enumerate() {
        tensors.push(TensorInfo {
            name: format!("conv{i}.weight"),
            shape: vec![c.out_channels, c.in_channels, c.kernel, c.kernel],
        });
        tensors.push(TensorInfo {
            name: format!("conv{i}.bias"),
            shape: vec![c.out_channels],
        });
    }
    ModelHeader {
        config: net.config().clone(),
        seed: net.seed(),
        tensors,
    }
}

pub fn encode_model(net: &EmbeddingNet) -> Vec<u8> {
    let header = serde_json::to_vec(&header_of(net)).expect("serializable header");
    let mut out = Vec::with_capacity(9 + header.len() + 4 * net.param_count());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    for c in net.convs() {
        for v in c.weight.iter().chain(&c.bias) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Parses a model file's bytes; errors are plain messages.
pub fn decode_model(bytes: &[u8]) -> std::result::Result<EmbeddingNet, String> {
    if bytes.len() < 9 || &bytes[..4] != MAGIC {
        return Err("not a model file (bad magic)".into());
    }
    if bytes[4] != VERSION {
        return Err(format!("unsupported model version {}", bytes[4]));
    }
    let len = u32::from_le_bytes(bytes[5..9].try_into().expect("4 bytes")) as usize;
    let body = &bytes[9..];
    if body.len() < len {
        return Err("truncated header".into());
    }
    let header: ModelHeader =
        serde_json::from_slice(&body[..len]).map_err(|e| format!("bad header: {e}"))?;
    let expected = header_of(&EmbeddingNet::new(header.config.clone(), header.seed).map_err(|e| e.to_string())?);
    if expected.tensors != header.tensors {
        return Err("tensor shapes do not match the network config".into());
    }
    let mut floats = body[len..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")));
    let total: usize = header.tensors.iter().map(|t| t.shape.iter().product::<usize>()).sum();
    if body.len() - len != 4 * total {
        return Err(format!(
            "expected {} parameter bytes, found {}",
            4 * total,
            body.len() - len
        ));
    }
    let mut convs = Vec::new();
    for pair in header.tensors.chunks(2) {
        let (w, b) = (&pair[0], &pair[1]);
        let weight: Vec<f32> = floats.by_ref().take(w.shape.iter().product()).collect();
        let bias: Vec<f32> = floats.by_ref().take(b.shape[0]).collect();
        convs.push(ConvParams {
            in_channels: w.shape[1],
            out_channels: w.shape[0],
            kernel: w.shape[2],
            weight,
            bias,
        });
    }
    EmbeddingNet::from_parts(header.config, header.seed, convs).map_err(|e| e.to_string())
}

pub fn save_model(net: &EmbeddingNet, path: &Path) -> Result<()> {
    error::write(path, encode_model(net))
}

pub fn load_model(path: &Path) -> Result<EmbeddingNet> {
    let bytes = error::read(path)?;
    decode_model(&bytes).map_err(|m| Error::format(path, m))
}

/// Network preset by name.
pub fn preset(name: &str) -> Result<NetConfig> {
    NetConfig::preset(name).ok_or_else(|| {
        Error::Usage(format!(
            "unknown preset {name:?} (expected tiny or paper-alexnet-conv4)"
        ))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_corruption() {
        let net = EmbeddingNet::new(NetConfig::tiny(), 5).unwrap();
        let bytes = encode_model(&net);
        assert_eq!(decode_model(&bytes).unwrap(), net);
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_model(&bad).is_err());
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(decode_model(&bad).is_err());
        assert!(decode_model(&bytes[..bytes.len() - 4]).is_err());
    }
}
