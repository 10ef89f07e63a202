//! Backward relevance propagation with per-neuron conditional masking.
//!
//! Rules: z+ (positive contributions only) for conv and dense layers,
//! winner-take-all for max pooling, proportional split over positive inputs
//! for average pooling, pass-through for relu and flatten. Positive bias
//! terms sit in the z+ denominator, so the relevance they would carry is
//! absorbed rather than redistributed.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{forward::window_argmax, ActivationTrace, Conv2d, Dense, LayerSpec, NetworkSpec, Pool};
use crate::tensor::Tensor;

/// Added to every rule denominator.
pub const STABILIZER: f64 = 1e-9;

/// A neuron: channel `channel_index` of conv layer `layer_index`, or unit
/// `channel_index` of a dense layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Condition {
    pub layer_index: usize,
    pub channel_index: usize,
}

impl Condition {
    pub fn new(layer_index: usize, channel_index: usize) -> Self {
        Self {
            layer_index,
            channel_index,
        }
    }

    pub fn validate(&self, net: &NetworkSpec) -> Result<()> {
        let layer = net.layers().get(self.layer_index).ok_or_else(|| Error::InvalidCondition {
            layer: self.layer_index,
            channel: self.channel_index,
            reason: "layer index out of range".into(),
        })?;
        match layer.condition_width() {
            None => Err(Error::InvalidCondition {
                layer: self.layer_index,
                channel: self.channel_index,
                reason: format!("{} layers carry no neurons", layer.kind()),
            }),
            Some(width) if self.channel_index >= width => Err(Error::InvalidCondition {
                layer: self.layer_index,
                channel: self.channel_index,
                reason: format!("layer has {width} neurons"),
            }),
            Some(_) => Ok(()),
        }
    }
}

impl std::fmt::Display for Condition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "L{}C{}", self.layer_index, self.channel_index)
    }
}

/// Every condition of a network in `(layer, channel)` ascending order.
pub fn all_conditions(net: &NetworkSpec) -> Vec<Condition> {
    net.layers()
        .iter()
        .enumerate()
        .flat_map(|(k, layer)| {
            (0..layer.condition_width().unwrap_or(0)).map(move |i| Condition::new(k, i))
        })
        .collect()
}

/// Input-resolution relevance map for one condition, summed over channels.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributionMap {
    pub condition: Condition,
    /// Shape `(h, w)`.
    pub values: Tensor,
}

impl AttributionMap {
    pub fn height(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.values.shape()[1]
    }

    pub fn total(&self) -> f64 {
        self.values.sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplanationSet {
    pub image_id: String,
    pub maps: Vec<AttributionMap>,
}

impl ExplanationSet {
    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    pub fn conditions(&self) -> Vec<Condition> {
        self.maps.iter().map(|m| m.condition).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionMode {
    /// Rank by each map's own total relevance on this image.
    PerImageSum,
    /// Rank by mean total relevance over the class; every image of the class
    /// then shares one condition list.
    ClassMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub mode: SelectionMode,
    pub n: usize,
}

/// Mean total relevance per condition over a set of images.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RelevanceTable {
    pub images: usize,
    pub mean: BTreeMap<Condition, f64>,
}

impl RelevanceTable {
    /// Averages per-image condition scores. Every image must report the same
    /// conditions.
    pub fn from_scores(per_image: &[Vec<(Condition, f64)>]) -> Result<Self> {
        let first = per_image.first().ok_or(Error::Empty("relevance table needs at least one image"))?;
        let mut sums: BTreeMap<Condition, f64> = first.iter().map(|&(c, _)| (c, 0.0)).collect();
        for scores in per_image {
            if scores.len() != sums.len() {
                return Err(Error::Config("images disagree on the condition set".into()));
            }
            for &(cond, s) in scores {
                *sums.get_mut(&cond).ok_or_else(|| {
                    Error::Config(format!("condition {cond} missing from the first image"))
                })? += s;
            }
        }
        let n = per_image.len() as f64;
        Ok(Self {
            images: per_image.len(),
            mean: sums.into_iter().map(|(c, s)| (c, s / n)).collect(),
        })
    }

    pub fn get(&self, cond: &Condition) -> Option<f64> {
        self.mean.get(cond).copied()
    }

    /// The `n` highest-scoring conditions, ties broken by condition order.
    pub fn top(&self, n: usize) -> Vec<Condition> {
        let scored: Vec<(Condition, f64)> = self.mean.iter().map(|(&c, &s)| (c, s)).collect();
        rank(scored).into_iter().take(n).map(|(c, _)| c).collect()
    }
}

fn rank(mut scored: Vec<(Condition, f64)>) -> Vec<(Condition, f64)> {
    scored.sort_by(|a, b| match b.1.total_cmp(&a.1) {
        Ordering::Equal => a.0.cmp(&b.0),
        other => other,
    });
    scored
}

fn check_target(net: &NetworkSpec, target_class: usize) -> Result<()> {
    if target_class >= net.num_classes() {
        return Err(Error::Config(format!(
            "target class {target_class} out of range for {} classes",
            net.num_classes()
        )));
    }
    Ok(())
}

fn check_trace(net: &NetworkSpec, trace: &ActivationTrace) -> Result<()> {
    let layers = trace.per_layer();
    if layers.len() != net.layers().len() + 1
        || layers.iter().enumerate().any(|(k, t)| t.shape() != net.shape_at(k))
    {
        return Err(Error::Config("activation trace does not belong to this network".into()));
    }
    Ok(())
}

/// Relevance with respect to every cached activation, starting from a
/// one-hot on the target logit. Entry `k` aligns with `trace.per_layer()[k]`.
pub fn unconditional_relevance(
    net: &NetworkSpec,
    trace: &ActivationTrace,
    target_class: usize,
) -> Result<Vec<Tensor>> {
    check_target(net, target_class)?;
    check_trace(net, trace)?;
    let depth = net.layers().len();
    let mut out = vec![Tensor::zeros(vec![0]); depth + 1];
    let mut rel = Tensor::zeros(net.shape_at(depth).to_vec());
    rel.data_mut()[target_class] = 1.0;
    out[depth] = rel;
    for k in (0..depth).rev() {
        out[k] = backward_layer(net, trace, k, &out[k + 1]);
    }
    Ok(out)
}

/// Channel-summed unconditional attribution map, shape `(h, w)`.
pub fn unconditional_attribution(
    net: &NetworkSpec,
    trace: &ActivationTrace,
    target_class: usize,
) -> Result<Tensor> {
    let rel = unconditional_relevance(net, trace, target_class)?;
    Ok(channel_sum(&rel[0]))
}

/// Attribution with relevance restricted to flow through `cond`: at the
/// output of the conditioned layer every other channel is zeroed before the
/// backward pass continues.
pub fn conditional_attribution(
    trace: &ActivationTrace,
    net: &NetworkSpec,
    target_class: usize,
    cond: Condition,
) -> Result<AttributionMap> {
    cond.validate(net)?;
    let upper = unconditional_relevance(net, trace, target_class)?;
    Ok(masked_descent(net, trace, &upper[cond.layer_index + 1], cond))
}

/// Attribution maps for every condition of the network, in condition order.
pub fn all_conditional_attributions(
    trace: &ActivationTrace,
    net: &NetworkSpec,
    target_class: usize,
) -> Result<Vec<AttributionMap>> {
    conditional_attributions(trace, net, target_class, &all_conditions(net))
}

/// Attribution maps for the given conditions, sharing one unconditional pass
/// for everything above each conditioned layer. Output order follows `conds`.
pub fn conditional_attributions(
    trace: &ActivationTrace,
    net: &NetworkSpec,
    target_class: usize,
    conds: &[Condition],
) -> Result<Vec<AttributionMap>> {
    for cond in conds {
        cond.validate(net)?;
    }
    let upper = unconditional_relevance(net, trace, target_class)?;
    Ok(conds
        .par_iter()
        .map(|&cond| masked_descent(net, trace, &upper[cond.layer_index + 1], cond))
        .collect())
}

fn masked_descent(
    net: &NetworkSpec,
    trace: &ActivationTrace,
    above: &Tensor,
    cond: Condition,
) -> AttributionMap {
    let mut rel = mask_channel(above, cond.channel_index);
    for k in (0..=cond.layer_index).rev() {
        rel = backward_layer(net, trace, k, &rel);
    }
    AttributionMap {
        condition: cond,
        values: channel_sum(&rel),
    }
}

/// Keeps only channel `channel` (rank-3 tensors) or unit `channel` (flat).
fn mask_channel(rel: &Tensor, channel: usize) -> Tensor {
    let mut out = Tensor::zeros(rel.shape().to_vec());
    let plane: usize = rel.shape()[1..].iter().product();
    let range = channel * plane..(channel + 1) * plane;
    out.data_mut()[range.clone()].copy_from_slice(&rel.data()[range]);
    out
}

fn channel_sum(rel: &Tensor) -> Tensor {
    let (c, h, w) = (rel.shape()[0], rel.shape()[1], rel.shape()[2]);
    let mut out = vec![0.0; h * w];
    for ch in 0..c {
        for (o, v) in out.iter_mut().zip(&rel.data()[ch * h * w..(ch + 1) * h * w]) {
            *o += v;
        }
    }
    Tensor::from_parts(vec![h, w], out)
}

/// Maps relevance at the output of layer `k` onto its input.
fn backward_layer(net: &NetworkSpec, trace: &ActivationTrace, k: usize, rel_out: &Tensor) -> Tensor {
    let input = trace.input_of(k);
    match &net.layers()[k] {
        LayerSpec::Conv2d(conv) => conv_zplus(conv, input, rel_out),
        LayerSpec::Dense(dense) => dense_zplus(dense, input, rel_out),
        LayerSpec::MaxPool2d(pool) => maxpool_wta(pool, input, rel_out),
        LayerSpec::AvgPool2d(pool) => avgpool_split(pool, input, rel_out),
        LayerSpec::Relu | LayerSpec::Flatten => {
            Tensor::from_parts(input.shape().to_vec(), rel_out.data().to_vec())
        }
    }
}

fn conv_zplus(conv: &Conv2d, input: &Tensor, rel_out: &Tensor) -> Tensor {
    let (h, w) = (input.shape()[1], input.shape()[2]);
    let (oh, ow) = (rel_out.shape()[1], rel_out.shape()[2]);
    let (kh, kw) = conv.kernel;
    let (s, p) = (conv.stride as isize, conv.padding as isize);
    let x = input.data();
    let mut rel_in = vec![0.0; x.len()];
    // Receptive field entries of one output position: (input index, weight).
    let mut field: Vec<(usize, f64)> = Vec::with_capacity(conv.in_channels * kh * kw);
    for o in 0..conv.out_channels {
        let bias = conv.bias[o].max(0.0);
        for oy in 0..oh {
            for ox in 0..ow {
                let r = rel_out.data()[(o * oh + oy) * ow + ox];
                if r == 0.0 {
                    continue;
                }
                field.clear();
                let mut denom = bias + STABILIZER;
                for c in 0..conv.in_channels {
                    for ky in 0..kh {
                        let iy = oy as isize * s + ky as isize - p;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..kw {
                            let ix = ox as isize * s + kx as isize - p;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let idx = (c * h + iy as usize) * w + ix as usize;
                            let z = (x[idx] * conv.weight(o, c, ky, kx)).max(0.0);
                            if z > 0.0 {
                                field.push((idx, z));
                                denom += z;
                            }
                        }
                    }
                }
                let scale = r / denom;
                for &(idx, z) in &field {
                    rel_in[idx] += z * scale;
                }
            }
        }
    }
    Tensor::from_parts(input.shape().to_vec(), rel_in)
}

fn dense_zplus(dense: &Dense, input: &Tensor, rel_out: &Tensor) -> Tensor {
    let x = input.data();
    let mut rel_in = vec![0.0; x.len()];
    for (o, &r) in rel_out.data().iter().enumerate() {
        if r == 0.0 {
            continue;
        }
        let row = &dense.weights[o * dense.in_features..(o + 1) * dense.in_features];
        let denom = dense.bias[o].max(0.0)
            + STABILIZER
            + row.iter().zip(x).map(|(w, v)| (w * v).max(0.0)).sum::<f64>();
        let scale = r / denom;
        for ((acc, w), v) in rel_in.iter_mut().zip(row).zip(x) {
            *acc += (w * v).max(0.0) * scale;
        }
    }
    Tensor::from_parts(input.shape().to_vec(), rel_in)
}

fn maxpool_wta(pool: &Pool, input: &Tensor, rel_out: &Tensor) -> Tensor {
    let (c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let (oh, ow) = (rel_out.shape()[1], rel_out.shape()[2]);
    let mut rel_in = vec![0.0; input.len()];
    for ch in 0..c {
        let xin = &input.data()[ch * h * w..(ch + 1) * h * w];
        for oy in 0..oh {
            for ox in 0..ow {
                let r = rel_out.data()[(ch * oh + oy) * ow + ox];
                if r != 0.0 {
                    let idx = window_argmax(xin, w, oy * pool.stride, ox * pool.stride, pool.size);
                    rel_in[ch * h * w + idx] += r;
                }
            }
        }
    }
    Tensor::from_parts(input.shape().to_vec(), rel_in)
}

fn avgpool_split(pool: &Pool, input: &Tensor, rel_out: &Tensor) -> Tensor {
    let (c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let (oh, ow) = (rel_out.shape()[1], rel_out.shape()[2]);
    let mut rel_in = vec![0.0; input.len()];
    for ch in 0..c {
        let base = ch * h * w;
        let xin = &input.data()[base..base + h * w];
        for oy in 0..oh {
            for ox in 0..ow {
                let r = rel_out.data()[(ch * oh + oy) * ow + ox];
                if r == 0.0 {
                    continue;
                }
                let (y0, x0) = (oy * pool.stride, ox * pool.stride);
                let mut denom = STABILIZER;
                for dy in 0..pool.size {
                    for dx in 0..pool.size {
                        denom += xin[(y0 + dy) * w + x0 + dx].max(0.0);
                    }
                }
                let scale = r / denom;
                for dy in 0..pool.size {
                    for dx in 0..pool.size {
                        let idx = (y0 + dy) * w + x0 + dx;
                        rel_in[base + idx] += xin[idx].max(0.0) * scale;
                    }
                }
            }
        }
    }
    Tensor::from_parts(input.shape().to_vec(), rel_in)
}

/// Total relevance per condition for one image.
pub fn condition_scores(maps: &[AttributionMap]) -> Vec<(Condition, f64)> {
    maps.iter().map(|m| (m.condition, m.total())).collect()
}

/// Mean per-condition total relevance over a class's images.
pub fn class_relevance_table(
    traces: &[ActivationTrace],
    net: &NetworkSpec,
    target_class: usize,
) -> Result<RelevanceTable> {
    if traces.is_empty() {
        return Err(Error::Empty("class relevance table needs at least one trace"));
    }
    let per_image = traces
        .iter()
        .map(|t| all_conditional_attributions(t, net, target_class).map(|m| condition_scores(&m)))
        .collect::<Result<Vec<_>>>()?;
    RelevanceTable::from_scores(&per_image)
}

/// Builds `E(x)`: the top-`n` conditional maps under the configured ranking.
pub fn explanation_set(
    image_id: &str,
    trace: &ActivationTrace,
    net: &NetworkSpec,
    target_class: usize,
    sel: SelectionConfig,
    class_stats: Option<&RelevanceTable>,
) -> Result<ExplanationSet> {
    check_selection(sel, net.condition_count())?;
    match sel.mode {
        SelectionMode::PerImageSum => {
            let maps = all_conditional_attributions(trace, net, target_class)?;
            select_from_maps(image_id, maps, sel, None)
        }
        SelectionMode::ClassMean => {
            let table = class_stats.ok_or_else(|| {
                Error::Config("class-mean selection requires a class relevance table".into())
            })?;
            let conds = table.top(sel.n);
            let maps = conditional_attributions(trace, net, target_class, &conds)?;
            Ok(ExplanationSet {
                image_id: image_id.to_string(),
                maps,
            })
        }
    }
}

/// Selection over precomputed maps (all conditions of one image).
pub fn select_from_maps(
    image_id: &str,
    maps: Vec<AttributionMap>,
    sel: SelectionConfig,
    class_stats: Option<&RelevanceTable>,
) -> Result<ExplanationSet> {
    check_selection(sel, maps.len())?;
    let scored: Vec<(Condition, f64)> = match sel.mode {
        SelectionMode::PerImageSum => condition_scores(&maps),
        SelectionMode::ClassMean => {
            let table = class_stats.ok_or_else(|| {
                Error::Config("class-mean selection requires a class relevance table".into())
            })?;
            maps.iter()
                .map(|m| {
                    table.get(&m.condition).map(|s| (m.condition, s)).ok_or_else(|| {
                        Error::Config(format!("condition {} missing from relevance table", m.condition))
                    })
                })
                .collect::<Result<_>>()?
        }
    };
    let mut by_condition: BTreeMap<Condition, AttributionMap> =
        maps.into_iter().map(|m| (m.condition, m)).collect();
    let chosen = rank(scored)
        .into_iter()
        .take(sel.n)
        .map(|(c, _)| by_condition.remove(&c).expect("scored conditions come from the maps"))
        .collect();
    Ok(ExplanationSet {
        image_id: image_id.to_string(),
        maps: chosen,
    })
}

fn check_selection(sel: SelectionConfig, available: usize) -> Result<()> {
    if sel.n == 0 || sel.n > available {
        return Err(Error::Config(format!(
            "base size {} must lie in 1..={available}",
            sel.n
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::forward;

    fn dense(in_f: usize, out_f: usize, weights: Vec<f64>) -> LayerSpec {
        LayerSpec::Dense(Dense {
            in_features: in_f,
            out_features: out_f,
            weights,
            bias: vec![0.0; out_f],
        })
    }

    fn image(values: &[f64]) -> Tensor {
        Tensor::new(vec![1, 1, values.len()], values.to_vec()).unwrap()
    }

    #[test]
    fn identity_net_masking() {
        let net = NetworkSpec::new(
            [1, 1, 2],
            vec![LayerSpec::Flatten, dense(2, 2, vec![1.0, 0.0, 0.0, 1.0])],
        )
        .unwrap();
        let x = image(&[0.3, 0.7]);
        let trace = forward(&net, &x).unwrap();
        let on = conditional_attribution(&trace, &net, 0, Condition::new(1, 0)).unwrap();
        assert!((on.values.data()[0] - 1.0).abs() < 1e-6);
        assert_eq!(on.values.data()[1], 0.0);
        let off = conditional_attribution(&trace, &net, 0, Condition::new(1, 1)).unwrap();
        assert!(off.values.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hand_computed_zplus() {
        // 4 inputs -> 3 hidden (relu) -> 2 outputs, all weights positive.
        let w1 = vec![
            1.0, 2.0, 0.0, 1.0, //
            0.5, 0.5, 0.5, 0.5, //
            0.0, 1.0, 3.0, 0.0,
        ];
        let w2 = vec![1.0, 2.0, 1.0, 0.5, 0.5, 4.0];
        let net = NetworkSpec::new(
            [1, 1, 4],
            vec![
                LayerSpec::Flatten,
                dense(4, 3, w1.clone()),
                LayerSpec::Relu,
                dense(3, 2, w2.clone()),
            ],
        )
        .unwrap();
        let x = [0.2, 0.4, 0.1, 0.8];
        let trace = forward(&net, &image(&x)).unwrap();

        // Manual z+ on target 1: R_j = h_j w2[1][j] / sum_k h_k w2[1][k]
        let h: Vec<f64> = (0..3)
            .map(|j| (0..4).map(|i| w1[j * 4 + i] * x[i]).sum())
            .collect();
        let zs: Vec<f64> = (0..3).map(|j| h[j] * w2[3 + j]).collect();
        let zsum: f64 = zs.iter().sum();
        let r_hidden: Vec<f64> = zs.iter().map(|z| z / zsum).collect();
        let mut expected = [0.0; 4];
        for j in 0..3 {
            let denom: f64 = (0..4).map(|i| w1[j * 4 + i] * x[i]).sum();
            for i in 0..4 {
                expected[i] += w1[j * 4 + i] * x[i] / denom * r_hidden[j];
            }
        }
        let map = unconditional_attribution(&net, &trace, 1).unwrap();
        for (a, b) in map.data().iter().zip(expected) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
        // Conditioning on hidden unit 2 keeps only its share.
        let cond = conditional_attribution(&trace, &net, 1, Condition::new(1, 2)).unwrap();
        let denom2: f64 = (0..4).map(|i| w1[8 + i] * x[i]).sum();
        for i in 0..4 {
            let e = w1[8 + i] * x[i] / denom2 * r_hidden[2];
            assert!((cond.values.data()[i] - e).abs() < 1e-8);
        }
    }

    #[test]
    fn invalid_conditions() {
        let net = NetworkSpec::new([1, 1, 2], vec![LayerSpec::Flatten, dense(2, 2, vec![1.0; 4])])
            .unwrap();
        let trace = forward(&net, &image(&[0.5, 0.5])).unwrap();
        assert!(conditional_attribution(&trace, &net, 0, Condition::new(0, 0)).is_err());
        assert!(conditional_attribution(&trace, &net, 0, Condition::new(1, 2)).is_err());
        assert!(conditional_attribution(&trace, &net, 5, Condition::new(1, 0)).is_err());
    }

    #[test]
    fn dominant_channel_selected_first() {
        // Hidden unit 0 carries ~90% of the target relevance.
        let net = NetworkSpec::new(
            [1, 1, 2],
            vec![
                LayerSpec::Flatten,
                dense(2, 3, vec![1.0, 0.0, 0.0, 1.0, 0.5, 0.5]),
                LayerSpec::Relu,
                dense(3, 1, vec![9.0, 0.5, 0.5]),
            ],
        )
        .unwrap();
        let trace = forward(&net, &image(&[1.0, 1.0])).unwrap();
        let maps = all_conditional_attributions(&trace, &net, 0).unwrap();
        // Exhaustive scoring over hidden-layer conditions.
        let hidden: Vec<_> = maps.iter().filter(|m| m.condition.layer_index == 1).collect();
        let best = hidden
            .iter()
            .max_by(|a, b| a.total().total_cmp(&b.total()))
            .unwrap();
        assert_eq!(best.condition, Condition::new(1, 0));
        assert!(best.total() > 0.85);

        let only_hidden: Vec<_> = maps
            .into_iter()
            .filter(|m| m.condition.layer_index == 1)
            .collect();
        let ex = select_from_maps(
            "img",
            only_hidden,
            SelectionConfig { mode: SelectionMode::PerImageSum, n: 1 },
            None,
        )
        .unwrap();
        assert_eq!(ex.maps[0].condition, Condition::new(1, 0));
    }

    #[test]
    fn full_selection_keeps_every_condition_and_ties_by_order() {
        let net = NetworkSpec::new([1, 1, 2], vec![LayerSpec::Flatten, dense(2, 2, vec![1.0; 4])])
            .unwrap();
        let trace = forward(&net, &image(&[0.5, 0.5])).unwrap();
        let sel = SelectionConfig { mode: SelectionMode::PerImageSum, n: 2 };
        let ex = explanation_set("a", &trace, &net, 0, sel, None).unwrap();
        // Target unit 0 holds all relevance, unit 1 none.
        assert_eq!(ex.conditions(), vec![Condition::new(1, 0), Condition::new(1, 1)]);
        let too_many = SelectionConfig { n: 3, ..sel };
        assert!(explanation_set("a", &trace, &net, 0, too_many, None).is_err());
        let class = SelectionConfig { mode: SelectionMode::ClassMean, n: 1 };
        assert!(explanation_set("a", &trace, &net, 0, class, None).is_err());
    }

    #[test]
    fn relevance_table_means() {
        let c0 = Condition::new(0, 0);
        let c1 = Condition::new(0, 1);
        let t = RelevanceTable::from_scores(&[vec![(c0, 1.0), (c1, 4.0)], vec![(c0, 3.0), (c1, 0.0)]])
            .unwrap();
        assert_eq!(t.get(&c0), Some(2.0));
        assert_eq!(t.get(&c1), Some(2.0));
        // Tie resolves to the smaller condition.
        assert_eq!(t.top(1), vec![c0]);
        assert!(RelevanceTable::from_scores(&[]).is_err());
    }
}
