//! Sequential convolutional classifiers: layer definitions, the network
//! document format and the forward pass.

mod document;
pub(crate) mod forward;

pub use document::{
    encode_network, load_network, load_network_file, save_network_file, NetworkDocument,
};
pub use forward::{forward, ActivationTrace};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: (usize, usize),
    pub stride: usize,
    pub padding: usize,
    /// Filter layout `(out_channels, in_channels, kh, kw)`, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Conv2d {
    #[inline]
    pub fn weight(&self, o: usize, c: usize, ky: usize, kx: usize) -> f64 {
        let (kh, kw) = self.kernel;
        self.weights[((o * self.in_channels + c) * kh + ky) * kw + kx]
    }

    pub fn output_hw(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        let (kh, kw) = self.kernel;
        let ph = h + 2 * self.padding;
        let pw = w + 2 * self.padding;
        if ph < kh || pw < kw || self.stride == 0 {
            return None;
        }
        Some(((ph - kh) / self.stride + 1, (pw - kw) / self.stride + 1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub in_features: usize,
    pub out_features: usize,
    /// Layout `(out_features, in_features)`, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pool {
    pub size: usize,
    pub stride: usize,
}

impl Pool {
    pub fn output_hw(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        if h < self.size || w < self.size || self.stride == 0 || self.size == 0 {
            return None;
        }
        Some(((h - self.size) / self.stride + 1, (w - self.size) / self.stride + 1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LayerSpec {
    Conv2d(Conv2d),
    Relu,
    MaxPool2d(Pool),
    AvgPool2d(Pool),
    Flatten,
    Dense(Dense),
}

impl LayerSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Conv2d(_) => "conv2d",
            LayerSpec::Relu => "relu",
            LayerSpec::MaxPool2d(_) => "maxpool2d",
            LayerSpec::AvgPool2d(_) => "avgpool2d",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Dense(_) => "dense",
        }
    }

    /// Number of addressable neurons (conv channels or dense units), if the
    /// layer can carry a condition.
    pub fn condition_width(&self) -> Option<usize> {
        match self {
            LayerSpec::Conv2d(c) => Some(c.out_channels),
            LayerSpec::Dense(d) => Some(d.out_features),
            _ => None,
        }
    }

    /// Output shape for a given input shape, or a description of the mismatch.
    pub fn output_shape(&self, input: &[usize]) -> std::result::Result<Vec<usize>, String> {
        match self {
            LayerSpec::Conv2d(conv) => {
                let &[c, h, w] = input else {
                    return Err(format!("conv2d expects a (c, h, w) input, got {input:?}"));
                };
                if c != conv.in_channels {
                    return Err(format!(
                        "conv2d expects {} input channels, got {c}",
                        conv.in_channels
                    ));
                }
                let (oh, ow) = conv
                    .output_hw(h, w)
                    .ok_or_else(|| format!("conv2d kernel {:?} does not fit {h}x{w}", conv.kernel))?;
                Ok(vec![conv.out_channels, oh, ow])
            }
            LayerSpec::Relu => Ok(input.to_vec()),
            LayerSpec::MaxPool2d(pool) | LayerSpec::AvgPool2d(pool) => {
                let &[c, h, w] = input else {
                    return Err(format!("pooling expects a (c, h, w) input, got {input:?}"));
                };
                let (oh, ow) = pool
                    .output_hw(h, w)
                    .ok_or_else(|| format!("pool window {} does not fit {h}x{w}", pool.size))?;
                Ok(vec![c, oh, ow])
            }
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
            LayerSpec::Dense(dense) => match *input {
                [n] if n == dense.in_features => Ok(vec![dense.out_features]),
                [n] => Err(format!(
                    "dense expects {} inputs, got {n}",
                    dense.in_features
                )),
                _ => Err(format!("dense expects a flat input, got {input:?}")),
            },
        }
    }

    fn check_parameters(&self) -> std::result::Result<(), String> {
        match self {
            LayerSpec::Conv2d(c) => {
                let n = c.out_channels * c.in_channels * c.kernel.0 * c.kernel.1;
                if c.weights.len() != n || c.bias.len() != c.out_channels {
                    return Err("conv2d parameter count does not match its shape".into());
                }
                if c.stride == 0 || c.kernel.0 == 0 || c.kernel.1 == 0 {
                    return Err("conv2d stride and kernel must be positive".into());
                }
            }
            LayerSpec::Dense(d) => {
                if d.weights.len() != d.in_features * d.out_features
                    || d.bias.len() != d.out_features
                {
                    return Err("dense parameter count does not match its shape".into());
                }
            }
            LayerSpec::MaxPool2d(p) | LayerSpec::AvgPool2d(p) => {
                if p.size == 0 || p.stride == 0 {
                    return Err("pool size and stride must be positive".into());
                }
            }
            LayerSpec::Relu | LayerSpec::Flatten => {}
        }
        let params = match self {
            LayerSpec::Conv2d(c) => Some((&c.weights, &c.bias)),
            LayerSpec::Dense(d) => Some((&d.weights, &d.bias)),
            _ => None,
        };
        if let Some((w, b)) = params {
            if w.iter().chain(b).any(|v| !v.is_finite()) {
                return Err("non-finite parameter".into());
            }
        }
        Ok(())
    }
}

/// A validated sequential network. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    input_shape: [usize; 3],
    layers: Vec<LayerSpec>,
    /// `shapes[k]` is the input shape of layer `k`; the last entry is the
    /// output shape.
    shapes: Vec<Vec<usize>>,
}

impl NetworkSpec {
    /// Validates shape compatibility eagerly; errors carry the layer index.
    pub fn new(input_shape: [usize; 3], layers: Vec<LayerSpec>) -> Result<Self> {
        if input_shape.contains(&0) {
            return Err(Error::MalformedNetwork(format!(
                "input shape {input_shape:?} has a zero dimension"
            )));
        }
        let mut shapes = vec![input_shape.to_vec()];
        for (k, layer) in layers.iter().enumerate() {
            layer
                .check_parameters()
                .map_err(|detail| Error::MalformedNetwork(format!("layer {k}: {detail}")))?;
            let next = layer
                .output_shape(shapes.last().unwrap())
                .map_err(|detail| Error::LayerShape { layer: k, detail })?;
            shapes.push(next);
        }
        if layers.is_empty() {
            return Err(Error::MalformedNetwork("network has no layers".into()));
        }
        if shapes.last().unwrap().len() != 1 {
            return Err(Error::LayerShape {
                layer: layers.len() - 1,
                detail: "network must end in a flat vector of class scores".into(),
            });
        }
        Ok(Self {
            input_shape,
            layers,
            shapes,
        })
    }

    pub fn input_shape(&self) -> [usize; 3] {
        self.input_shape
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    /// Input shape of layer `k` (`k == layers.len()` gives the output shape).
    pub fn shape_at(&self, k: usize) -> &[usize] {
        &self.shapes[k]
    }

    pub fn num_classes(&self) -> usize {
        self.shapes.last().unwrap()[0]
    }

    /// Total number of `(layer, neuron)` pairs that can carry a condition.
    pub fn condition_count(&self) -> usize {
        self.layers.iter().filter_map(LayerSpec::condition_width).sum()
    }
}
