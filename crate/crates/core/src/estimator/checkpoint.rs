//! Decoder checkpoints.
//!
//! Layout: `u64` little-endian header length, the JSON header, then every
//! tensor listed in the header as little-endian `f32`, in header order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::decoder::{LinearDecoder, INPUT_WIDTH, OUTPUT_WIDTH};
use crate::error::{Error, Result};

const FORMAT: &str = "glasspose-linear-decoder";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub version: u32,
    pub dtype: String,
    pub tensors: Vec<TensorInfo>,
    pub seed: u64,
    /// SHA-256 of the training configuration.
    pub config_hash: String,
}

impl CheckpointHeader {
    pub fn new(seed: u64, config_hash: String) -> Self {
        let t = |name: &str, shape: &[usize]| TensorInfo {
            name: name.into(),
            shape: shape.to_vec(),
        };
        CheckpointHeader {
            format: FORMAT.into(),
            version: VERSION,
            dtype: "f32le".into(),
            tensors: vec![
                t("weights", &[OUTPUT_WIDTH, INPUT_WIDTH]),
                t("bias", &[OUTPUT_WIDTH]),
                t("shift", &[INPUT_WIDTH]),
                t("scale", &[INPUT_WIDTH]),
            ],
            seed,
            config_hash,
        }
    }
}

/// Serialized checkpoint bytes. Parameters are rounded to `f32`.
pub fn checkpoint_bytes(model: &LinearDecoder, header: &CheckpointHeader) -> Result<Vec<u8>> {
    model.validate()?;
    let json = serde_json::to_vec(header).expect("header serializes");
    let mut out = Vec::new();
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for v in model
        .weights
        .iter()
        .chain(&model.bias)
        .chain(&model.shift)
        .chain(&model.scale)
    {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn save_checkpoint(path: &Path, model: &LinearDecoder, header: &CheckpointHeader) -> Result<()> {
    let bytes = checkpoint_bytes(model, header)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn parse_checkpoint(bytes: &[u8]) -> Result<(LinearDecoder, CheckpointHeader)> {
    let bad = |m: &str| Error::SchemaMismatch(format!("checkpoint: {m}"));
    if bytes.len() < 8 {
        return Err(bad("truncated header length"));
    }
    let len = u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes")) as usize;
    let body = &bytes[8..];
    if body.len() < len {
        return Err(bad("truncated header"));
    }
    let header: CheckpointHeader = serde_json::from_slice(&body[..len]).map_err(|e| bad(&e.to_string()))?;
    let expected = CheckpointHeader::new(header.seed, header.config_hash.clone());
    if header != expected {
        return Err(bad("unsupported format, version or tensor shapes"));
    }
    let values: Vec<f64> = body[len..]
        .chunks(4)
        .map(|c| c.try_into().map(|b| f32::from_le_bytes(b) as f64))
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| bad("payload is not a whole number of f32"))?;
    let sizes: Vec<usize> = header.tensors.iter().map(|t| t.shape.iter().product()).collect();
    if values.len() != sizes.iter().sum::<usize>() {
        return Err(bad("payload size does not match the tensor shapes"));
    }
    let mut rest = values.as_slice();
    let mut take = |n: usize| {
        let (a, b) = rest.split_at(n);
        rest = b;
        a.to_vec()
    };
    let model = LinearDecoder {
        weights: take(sizes[0]),
        bias: take(sizes[1]),
        shift: take(sizes[2]),
        scale: take(sizes[3]),
    };
    model.validate()?;
    Ok((model, header))
}

pub fn load_checkpoint(path: &Path) -> Result<(LinearDecoder, CheckpointHeader)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_checkpoint(&bytes)
}
