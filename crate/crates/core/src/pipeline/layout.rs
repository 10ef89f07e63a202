//! Output directory layout and the run index.
//!
//! ```text
//! <out>/index.json
//! <out>/<method>/<class>/<image>/map_000.f32   raw attribution grid
//! <out>/<method>/<class>/<image>/map_000.pgm   min-max normalized preview
//! <out>/dcne/<class>/<image>/concise.dcs      concise set with mixing weights
//! <out>/dcne/<class>/<image>/overlay_000.ppm  heatmap over the input image
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evalbench::normalize_to_uint8;
use crate::io::{read_attribution, write_attribution, write_bytes, write_pgm, GrayImage};
use crate::Tensor;

pub const INDEX_FILE: &str = "index.json";
pub const MAP_EXTENSION: &str = "f32";
pub const CONCISE_FILE: &str = "concise.dcs";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub method: String,
    pub class_id: String,
    pub image_id: String,
    pub target: usize,
    pub predicted: usize,
    /// Paths relative to the output root, in map order.
    pub maps: Vec<String>,
    /// Source condition of each map (`L{layer}C{channel}`); empty for
    /// factorized maps.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub conditions: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub extra: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunIndex {
    pub command: String,
    pub parameters: serde_json::Value,
    pub entries: Vec<IndexEntry>,
}

impl RunIndex {
    pub fn new(command: &str, parameters: serde_json::Value) -> Self {
        Self {
            command: command.into(),
            parameters,
            entries: Vec::new(),
        }
    }

    pub fn write(&self, out: &Path) -> Result<PathBuf> {
        let path = out.join(INDEX_FILE);
        write_bytes(&path, &serde_json::to_vec_pretty(self)?)?;
        Ok(path)
    }
}

pub fn image_dir(out: &Path, method: &str, class_id: &str, image_id: &str) -> PathBuf {
    out.join(method).join(class_id).join(image_id)
}

pub fn map_name(i: usize) -> String {
    format!("map_{i:03}.{MAP_EXTENSION}")
}

/// Writes `map_NNN.f32` and its `.pgm` preview; returns the raw paths.
pub fn write_maps(dir: &Path, maps: &[Tensor]) -> Result<Vec<PathBuf>> {
    let mut paths = Vec::with_capacity(maps.len());
    for (i, map) in maps.iter().enumerate() {
        let raw = dir.join(map_name(i));
        write_attribution(&raw, map)?;
        write_pgm(&raw.with_extension("pgm"), &GrayImage::from(normalize_to_uint8(map)))?;
        paths.push(raw);
    }
    Ok(paths)
}

/// All `*.f32` maps in `dir`, sorted by file name.
pub fn read_maps(dir: &Path) -> Result<Vec<Tensor>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e == MAP_EXTENSION) {
            paths.push(path);
        }
    }
    paths.sort();
    paths.iter().map(|p| read_attribution(p)).collect()
}

pub fn relative(root: &Path, path: &Path) -> String {
    path.strip_prefix(root)
        .unwrap_or(path)
        .to_string_lossy()
        .replace('\\', "/")
}
