//! Per-class explanation workflow: every conditional map of every image,
//! the class relevance table, base-set selection and factorization.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factorize::{concise_from_factorization, flatten, nnmf, ConciseSet, FactorizationConfig};
use crate::net::{forward, NetworkSpec};
use crate::relprop::{
    all_conditional_attributions, condition_scores, select_from_maps, AttributionMap, ExplanationSet,
    RelevanceTable, SelectionConfig, SelectionMode,
};
use crate::Tensor;

pub const DEFAULT_BASE_SIZE: usize = 300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainConfig {
    pub mode: SelectionMode,
    pub base_size: usize,
    pub factorization: FactorizationConfig,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        Self {
            mode: SelectionMode::ClassMean,
            base_size: DEFAULT_BASE_SIZE,
            factorization: FactorizationConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorizationStats {
    pub iterations: usize,
    pub initial_objective: f64,
    pub final_objective: f64,
}

/// Everything produced for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageExplanation {
    pub image_id: String,
    pub target: usize,
    pub predicted: usize,
    /// Base set `E(x)` of size `n`.
    pub base: ExplanationSet,
    /// The first `z` maps of the base ranking.
    pub top: ExplanationSet,
    pub concise: ConciseSet,
    pub stats: FactorizationStats,
}

/// All conditional maps of a group of images sharing one target class.
#[derive(Debug, Clone)]
pub struct ClassMaps {
    pub target: usize,
    pub image_ids: Vec<String>,
    pub predicted: Vec<usize>,
    pub maps: Vec<Vec<AttributionMap>>,
    pub table: RelevanceTable,
}

impl ClassMaps {
    /// Runs the forward pass and all conditional propagations, in parallel
    /// over images. `target = None` explains each image's predicted class,
    /// which is only allowed for a single image.
    pub fn compute(net: &NetworkSpec, images: &[(String, Tensor)], target: Option<usize>) -> Result<Self> {
        if images.is_empty() {
            return Err(Error::Empty("no images to explain"));
        }
        if target.is_none() && images.len() > 1 {
            return Err(Error::Config("a shared target class is required for more than one image".into()));
        }
        let per_image = images
            .par_iter()
            .map(|(_, x)| {
                let trace = forward(net, x)?;
                let predicted = trace.predicted_class();
                let t = target.unwrap_or(predicted);
                Ok((predicted, all_conditional_attributions(&trace, net, t)?))
            })
            .collect::<Result<Vec<_>>>()?;
        let (predicted, maps): (Vec<usize>, Vec<Vec<AttributionMap>>) = per_image.into_iter().unzip();
        let scores: Vec<_> = maps.iter().map(|m| condition_scores(m)).collect();
        Ok(Self {
            target: target.unwrap_or(predicted[0]),
            image_ids: images.iter().map(|(id, _)| id.clone()).collect(),
            predicted,
            table: RelevanceTable::from_scores(&scores)?,
            maps,
        })
    }

    pub fn len(&self) -> usize {
        self.image_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.image_ids.is_empty()
    }

    /// Base set of size `n` for image `i`.
    pub fn select(&self, i: usize, mode: SelectionMode, n: usize) -> Result<ExplanationSet> {
        select_from_maps(
            &self.image_ids[i],
            self.maps[i].clone(),
            SelectionConfig { mode, n },
            Some(&self.table),
        )
    }

    /// Base set, top-`z` baseline and concise set for every image.
    pub fn explain(&self, cfg: &ExplainConfig) -> Result<Vec<ImageExplanation>> {
        let z = cfg.factorization.components;
        if z == 0 || z > cfg.base_size {
            return Err(Error::Config(format!(
                "component count {z} must lie in 1..={}",
                cfg.base_size
            )));
        }
        (0..self.len())
            .into_par_iter()
            .map(|i| {
                let base = self.select(i, cfg.mode, cfg.base_size)?;
                let top = ExplanationSet {
                    image_id: base.image_id.clone(),
                    maps: base.maps[..z].to_vec(),
                };
                let flat = flatten(&base)?;
                let f = nnmf(&flat.matrix, &cfg.factorization)?;
                let stats = FactorizationStats {
                    iterations: f.iterations(),
                    initial_objective: f.objective_trace[0],
                    final_objective: f.final_objective(),
                };
                let concise = concise_from_factorization(&base.image_id, &flat, f);
                Ok(ImageExplanation {
                    image_id: base.image_id.clone(),
                    target: self.target,
                    predicted: self.predicted[i],
                    base,
                    top,
                    concise,
                    stats,
                })
            })
            .collect()
    }
}
