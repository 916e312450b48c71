//! Weights container: an 8-byte magic, a little-endian u32 header length, a
//! JSON header, then every layer's weight (row-major) and bias as
//! little-endian f32 in declaration order.

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::layer::{Activation, DenseLayer};
use super::model::{ArchKind, Architecture, Model};
use crate::dataset::ThickNorm;
use crate::{Error, Result};

pub const MAGIC: &[u8; 8] = b"SPCPWGT\n";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerHeader {
    pub rows: usize,
    pub cols: usize,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightsHeader {
    pub format_version: u32,
    #[serde(flatten)]
    pub architecture: Architecture,
    pub classes: usize,
    pub thick_min: f64,
    pub thick_max: f64,
    pub byte_order: String,
    pub dtype: String,
    pub layers: Vec<LayerHeader>,
}

pub fn encode_weights(model: &Model) -> Result<Vec<u8>> {
    let norm = model.norm();
    let header = WeightsHeader {
        format_version: FORMAT_VERSION,
        architecture: model.architecture().clone(),
        classes: model.classes(),
        thick_min: norm.thick_min,
        thick_max: norm.thick_max,
        byte_order: "little".into(),
        dtype: "f32".into(),
        layers: model
            .layers()
            .iter()
            .map(|l| LayerHeader {
                rows: l.outputs(),
                cols: l.inputs(),
                activation: l.activation,
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(12 + json.len() + 4 * model.param_count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for layer in model.layers() {
        for v in layer.weight.iter().chain(layer.bias.iter()) {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_weights(bytes: &[u8], expected: Option<ArchKind>) -> Result<Model> {
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(Error::Format("not a weights file (bad magic)".into()));
    }
    let len = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let json = bytes
        .get(12..12 + len)
        .ok_or_else(|| Error::Format("truncated weights header".into()))?;
    let header: WeightsHeader = serde_json::from_slice(json)?;
    if header.format_version != FORMAT_VERSION {
        return Err(Error::Version(format!(
            "weights format version {} is not supported (expected {FORMAT_VERSION})",
            header.format_version
        )));
    }
    if header.byte_order != "little" || header.dtype != "f32" {
        return Err(Error::Format("only little-endian f32 payloads are supported".into()));
    }
    if let Some(kind) = expected {
        if header.architecture.kind() != kind {
            return Err(Error::Version(format!(
                "weights hold a {:?} model but {kind:?} was requested",
                header.architecture.kind()
            )));
        }
    }
    let mut payload = bytes[12 + len..].chunks_exact(4).map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))));
    let mut layers = Vec::with_capacity(header.layers.len());
    for lh in &header.layers {
        let w: Vec<f64> = payload.by_ref().take(lh.rows * lh.cols).collect();
        let b: Vec<f64> = payload.by_ref().take(lh.rows).collect();
        if w.len() != lh.rows * lh.cols || b.len() != lh.rows {
            return Err(Error::Format("weights payload shorter than the header declares".into()));
        }
        layers.push(DenseLayer {
            weight: Array2::from_shape_vec((lh.rows, lh.cols), w).map_err(|e| Error::Format(e.to_string()))?,
            bias: Array1::from(b),
            activation: lh.activation,
        });
    }
    if payload.next().is_some() {
        return Err(Error::Format("trailing bytes after the weights payload".into()));
    }
    let norm = ThickNorm::new(header.thick_min, header.thick_max)?;
    Model::from_layers(header.architecture, header.classes, layers, norm)
}

pub fn save_weights(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_weights(model)?).map_err(|e| Error::io(path, e))
}

pub fn load_weights(path: impl AsRef<Path>, expected: Option<ArchKind>) -> Result<Model> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_weights(&bytes, expected)
}
