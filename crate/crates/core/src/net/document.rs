//! JSON network document plus a sidecar of little-endian `f32` parameters.
//!
//! Offsets in the document count `f32` elements (not bytes) from the start
//! of the sidecar. See `docs/FORMATS.md`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{Conv2d, Dense, LayerSpec, NetworkSpec, Pool};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkDocument {
    pub input_shape: [usize; 3],
    /// Sidecar path relative to the document. Defaults to the document's
    /// file stem with a `.bin` extension.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights_file: Option<String>,
    pub layers: Vec<Value>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum LayerEntry {
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel_size: [usize; 2],
        #[serde(default = "one")]
        stride: usize,
        #[serde(default)]
        padding: usize,
        weight_offset: usize,
        bias_offset: usize,
    },
    Relu,
    Maxpool2d {
        size: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        stride: Option<usize>,
    },
    Avgpool2d {
        size: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        stride: Option<usize>,
    },
    Flatten,
    Dense {
        in_features: usize,
        out_features: usize,
        weight_offset: usize,
        bias_offset: usize,
    },
}

fn one() -> usize {
    1
}

const KINDS: [&str; 6] = ["conv2d", "relu", "maxpool2d", "avgpool2d", "flatten", "dense"];

/// Parses and validates a network document against its parameter sidecar.
pub fn load_network(document: &[u8], weights: &[u8]) -> Result<NetworkSpec> {
    let doc: NetworkDocument = serde_json::from_slice(document)
        .map_err(|e| Error::MalformedNetwork(e.to_string()))?;
    if !weights.len().is_multiple_of(4) {
        return Err(Error::MalformedNetwork(format!(
            "weight sidecar length {} is not a multiple of 4",
            weights.len()
        )));
    }
    let params: Vec<f64> = weights
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect();
    let slice = |k: usize, offset: usize, len: usize| -> Result<Vec<f64>> {
        params
            .get(offset..offset + len)
            .map(<[f64]>::to_vec)
            .ok_or_else(|| {
                Error::MalformedNetwork(format!(
                    "layer {k}: parameter range {offset}..{} exceeds sidecar of {} values",
                    offset + len,
                    params.len()
                ))
            })
    };

    let mut layers = Vec::with_capacity(doc.layers.len());
    for (k, raw) in doc.layers.iter().enumerate() {
        let kind = raw
            .get("kind")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::MalformedNetwork(format!("layer {k}: missing `kind`")))?;
        if !KINDS.contains(&kind) {
            return Err(Error::UnsupportedLayer {
                layer: k,
                kind: kind.to_string(),
            });
        }
        let entry: LayerEntry = serde_json::from_value(raw.clone())
            .map_err(|e| Error::MalformedNetwork(format!("layer {k}: {e}")))?;
        let layer = match entry {
            LayerEntry::Conv2d {
                in_channels,
                out_channels,
                kernel_size: [kh, kw],
                stride,
                padding,
                weight_offset,
                bias_offset,
            } => LayerSpec::Conv2d(Conv2d {
                in_channels,
                out_channels,
                kernel: (kh, kw),
                stride,
                padding,
                weights: slice(k, weight_offset, out_channels * in_channels * kh * kw)?,
                bias: slice(k, bias_offset, out_channels)?,
            }),
            LayerEntry::Relu => LayerSpec::Relu,
            LayerEntry::Maxpool2d { size, stride } => LayerSpec::MaxPool2d(Pool {
                size,
                stride: stride.unwrap_or(size),
            }),
            LayerEntry::Avgpool2d { size, stride } => LayerSpec::AvgPool2d(Pool {
                size,
                stride: stride.unwrap_or(size),
            }),
            LayerEntry::Flatten => LayerSpec::Flatten,
            LayerEntry::Dense {
                in_features,
                out_features,
                weight_offset,
                bias_offset,
            } => LayerSpec::Dense(Dense {
                in_features,
                out_features,
                weights: slice(k, weight_offset, in_features * out_features)?,
                bias: slice(k, bias_offset, out_features)?,
            }),
        };
        layers.push(layer);
    }
    NetworkSpec::new(doc.input_shape, layers)
}

/// Reads a network document and the sidecar it names.
pub fn load_network_file(path: &Path) -> Result<NetworkSpec> {
    let document = fs::read(path).map_err(|e| Error::io(path, e))?;
    let doc: NetworkDocument = serde_json::from_slice(&document)
        .map_err(|e| Error::MalformedNetwork(e.to_string()))?;
    let sidecar = sidecar_path(path, doc.weights_file.as_deref());
    let weights = fs::read(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
    load_network(&document, &weights)
}

fn sidecar_path(doc_path: &Path, named: Option<&str>) -> std::path::PathBuf {
    let dir = doc_path.parent().unwrap_or_else(|| Path::new("."));
    match named {
        Some(name) => dir.join(name),
        None => doc_path.with_extension("bin"),
    }
}

/// Serializes a network into a document and its sidecar bytes. Parameters are
/// narrowed to `f32`.
pub fn encode_network(net: &NetworkSpec, weights_file: &str) -> (Vec<u8>, Vec<u8>) {
    let mut params: Vec<f32> = Vec::new();
    let mut push = |values: &[f64]| -> usize {
        let offset = params.len();
        params.extend(values.iter().map(|&v| v as f32));
        offset
    };
    let entries: Vec<LayerEntry> = net
        .layers()
        .iter()
        .map(|layer| match layer {
            LayerSpec::Conv2d(c) => LayerEntry::Conv2d {
                in_channels: c.in_channels,
                out_channels: c.out_channels,
                kernel_size: [c.kernel.0, c.kernel.1],
                stride: c.stride,
                padding: c.padding,
                weight_offset: push(&c.weights),
                bias_offset: push(&c.bias),
            },
            LayerSpec::Relu => LayerEntry::Relu,
            LayerSpec::MaxPool2d(p) => LayerEntry::Maxpool2d {
                size: p.size,
                stride: Some(p.stride),
            },
            LayerSpec::AvgPool2d(p) => LayerEntry::Avgpool2d {
                size: p.size,
                stride: Some(p.stride),
            },
            LayerSpec::Flatten => LayerEntry::Flatten,
            LayerSpec::Dense(d) => LayerEntry::Dense {
                in_features: d.in_features,
                out_features: d.out_features,
                weight_offset: push(&d.weights),
                bias_offset: push(&d.bias),
            },
        })
        .collect();
    let doc = NetworkDocument {
        input_shape: net.input_shape(),
        weights_file: Some(weights_file.to_string()),
        layers: entries
            .iter()
            .map(|e| serde_json::to_value(e).expect("layer entries serialize"))
            .collect(),
    };
    let mut json = serde_json::to_vec_pretty(&doc).expect("network document serializes");
    json.push(b'\n');
    let bytes = params.iter().flat_map(|v| v.to_le_bytes()).collect();
    (json, bytes)
}

/// Writes `path` and a sidecar next to it with the same stem and `.bin`.
pub fn save_network_file(net: &NetworkSpec, path: &Path) -> Result<()> {
    let sidecar = path.with_extension("bin");
    let name = sidecar
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| Error::Config(format!("bad network path {}", path.display())))?
        .to_string();
    let (json, bytes) = encode_network(net, &name);
    fs::write(path, json).map_err(|e| Error::io(path, e))?;
    fs::write(&sidecar, bytes).map_err(|e| Error::io(&sidecar, e))?;
    Ok(())
}
