#![allow(dead_code)]

pub mod oracles;

use dcne::net::{forward, Conv2d, Dense, LayerSpec, NetworkSpec, Pool};
use dcne::Tensor;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Random zero-bias sequential net: one to three conv/pool blocks, then a
/// dense head. Every weighted layer but the last is followed by a ReLU.
pub fn random_net(rng: &mut ChaCha8Rng, max_channels: usize) -> NetworkSpec {
    let c0 = rng.gen_range(1..=3);
    let side = rng.gen_range(4..=10);
    let mut shape = (c0, side, side);
    let mut layers = Vec::new();
    let blocks = rng.gen_range(1..=3);
    for _ in 0..blocks {
        let (c, h, w) = shape;
        let out = rng.gen_range(1..=max_channels);
        let k = rng.gen_range(1..=3.min(h).min(w));
        let stride = rng.gen_range(1..=2);
        let padding = rng.gen_range(0..=(k - 1).min(1));
        let conv = Conv2d {
            in_channels: c,
            out_channels: out,
            kernel: (k, k),
            stride,
            padding,
            weights: (0..out * c * k * k).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            bias: vec![0.0; out],
        };
        let (oh, ow) = conv.output_hw(h, w).unwrap();
        layers.push(LayerSpec::Conv2d(conv));
        layers.push(LayerSpec::Relu);
        shape = (out, oh, ow);
        if oh >= 2 && ow >= 2 && rng.gen_bool(0.5) {
            let pool = Pool { size: 2, stride: 2 };
            layers.push(if rng.gen_bool(0.5) {
                LayerSpec::MaxPool2d(pool)
            } else {
                LayerSpec::AvgPool2d(pool)
            });
            shape = (out, oh / 2, ow / 2);
        }
    }
    layers.push(LayerSpec::Flatten);
    let mut features = shape.0 * shape.1 * shape.2;
    if rng.gen_bool(0.5) {
        let hidden = rng.gen_range(2..=max_channels);
        layers.push(dense(rng, features, hidden));
        layers.push(LayerSpec::Relu);
        features = hidden;
    }
    let classes = rng.gen_range(2..=4);
    layers.push(dense(rng, features, classes));
    NetworkSpec::new([c0, side, side], layers).unwrap()
}

fn dense(rng: &mut ChaCha8Rng, in_f: usize, out_f: usize) -> LayerSpec {
    LayerSpec::Dense(Dense {
        in_features: in_f,
        out_features: out_f,
        weights: (0..in_f * out_f).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        bias: vec![0.0; out_f],
    })
}

pub fn random_image(rng: &mut ChaCha8Rng, net: &NetworkSpec) -> Tensor {
    let [c, h, w] = net.input_shape();
    Tensor::new(vec![c, h, w], (0..c * h * w).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap()
}

/// A random net and image whose predicted logit is clearly positive, so the
/// target carries relevance that can be conserved.
pub fn net_with_positive_target(rng: &mut ChaCha8Rng, max_channels: usize) -> (NetworkSpec, Tensor, usize) {
    loop {
        let net = random_net(rng, max_channels);
        for _ in 0..8 {
            let x = random_image(rng, &net);
            let trace = forward(&net, &x).unwrap();
            let t = trace.predicted_class();
            if trace.logits().data()[t] > 0.1 {
                return (net, x, t);
            }
        }
    }
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
