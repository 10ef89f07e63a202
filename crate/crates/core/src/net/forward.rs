use super::{Conv2d, Dense, LayerSpec, NetworkSpec, Pool};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Cached activations for one image: the input of layer 0 followed by the
/// output of every layer. The final entry holds the class scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationTrace {
    per_layer: Vec<Tensor>,
}

impl ActivationTrace {
    pub fn per_layer(&self) -> &[Tensor] {
        &self.per_layer
    }

    /// Input of layer `k`.
    pub fn input_of(&self, k: usize) -> &Tensor {
        &self.per_layer[k]
    }

    pub fn logits(&self) -> &Tensor {
        self.per_layer.last().expect("trace holds at least the input")
    }

    pub fn predicted_class(&self) -> usize {
        self.logits().argmax().unwrap_or(0)
    }
}

pub fn forward(net: &NetworkSpec, image: &Tensor) -> Result<ActivationTrace> {
    let input_shape = net.input_shape();
    if image.shape() != input_shape {
        return Err(Error::Shape {
            expected: input_shape.to_vec(),
            actual: image.shape().to_vec(),
        });
    }
    let mut per_layer = Vec::with_capacity(net.layers().len() + 1);
    per_layer.push(image.clone());
    for (k, layer) in net.layers().iter().enumerate() {
        let input = per_layer.last().unwrap();
        let out_shape = net.shape_at(k + 1).to_vec();
        let out = match layer {
            LayerSpec::Conv2d(conv) => conv_forward(conv, input, out_shape),
            LayerSpec::Relu => Tensor::from_parts(
                out_shape,
                input.data().iter().map(|&v| v.max(0.0)).collect(),
            ),
            LayerSpec::MaxPool2d(pool) => pool_forward(pool, input, out_shape, true),
            LayerSpec::AvgPool2d(pool) => pool_forward(pool, input, out_shape, false),
            LayerSpec::Flatten => Tensor::from_parts(out_shape, input.data().to_vec()),
            LayerSpec::Dense(dense) => dense_forward(dense, input, out_shape),
        };
        if !out.is_finite() {
            return Err(Error::NonFinite("forward"));
        }
        per_layer.push(out);
    }
    Ok(ActivationTrace { per_layer })
}

fn conv_forward(conv: &Conv2d, input: &Tensor, out_shape: Vec<usize>) -> Tensor {
    let (h, w) = (input.shape()[1], input.shape()[2]);
    let (oh, ow) = (out_shape[1], out_shape[2]);
    let (kh, kw) = conv.kernel;
    let (s, p) = (conv.stride as isize, conv.padding as isize);
    let x = input.data();
    let mut out = vec![0.0; out_shape.iter().product()];
    for o in 0..conv.out_channels {
        let plane = &mut out[o * oh * ow..(o + 1) * oh * ow];
        plane.fill(conv.bias[o]);
        for c in 0..conv.in_channels {
            let xin = &x[c * h * w..(c + 1) * h * w];
            for ky in 0..kh {
                for kx in 0..kw {
                    let wt = conv.weight(o, c, ky, kx);
                    if wt == 0.0 {
                        continue;
                    }
                    for oy in 0..oh {
                        let iy = oy as isize * s + ky as isize - p;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let row = &xin[iy as usize * w..(iy as usize + 1) * w];
                        let orow = &mut plane[oy * ow..(oy + 1) * ow];
                        for (ox, acc) in orow.iter_mut().enumerate() {
                            let ix = ox as isize * s + kx as isize - p;
                            if ix >= 0 && ix < w as isize {
                                *acc += wt * row[ix as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::from_parts(out_shape, out)
}

/// Row-major index of the first maximal element of one pooling window.
pub(crate) fn window_argmax(x: &[f64], w: usize, y0: usize, x0: usize, size: usize) -> usize {
    let mut best = y0 * w + x0;
    for dy in 0..size {
        for dx in 0..size {
            let idx = (y0 + dy) * w + x0 + dx;
            if x[idx] > x[best] {
                best = idx;
            }
        }
    }
    best
}

fn pool_forward(pool: &Pool, input: &Tensor, out_shape: Vec<usize>, max: bool) -> Tensor {
    let (c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let (oh, ow) = (out_shape[1], out_shape[2]);
    let area = (pool.size * pool.size) as f64;
    let mut out = vec![0.0; c * oh * ow];
    for ch in 0..c {
        let xin = &input.data()[ch * h * w..(ch + 1) * h * w];
        for oy in 0..oh {
            for ox in 0..ow {
                let (y0, x0) = (oy * pool.stride, ox * pool.stride);
                out[(ch * oh + oy) * ow + ox] = if max {
                    xin[window_argmax(xin, w, y0, x0, pool.size)]
                } else {
                    let mut sum = 0.0;
                    for dy in 0..pool.size {
                        for dx in 0..pool.size {
                            sum += xin[(y0 + dy) * w + x0 + dx];
                        }
                    }
                    sum / area
                };
            }
        }
    }
    Tensor::from_parts(out_shape, out)
}

fn dense_forward(dense: &Dense, input: &Tensor, out_shape: Vec<usize>) -> Tensor {
    let x = input.data();
    let out = (0..dense.out_features)
        .map(|o| {
            let row = &dense.weights[o * dense.in_features..(o + 1) * dense.in_features];
            dense.bias[o] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
        })
        .collect();
    Tensor::from_parts(out_shape, out)
}
