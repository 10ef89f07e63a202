//! Dataset manifest: classes, their feature names, and per-image image and
//! mask paths relative to the manifest file.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evalbench::FeatureMask;
use crate::io::{read_pgm, read_ppm, write_bytes, RgbImage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageEntry {
    pub image_id: String,
    pub image: String,
    /// One slot per class feature; `null` where the feature is not visible.
    #[serde(default)]
    pub masks: Vec<Option<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassEntry {
    pub class_id: String,
    /// Network output index; defaults to the class's position in the list.
    #[serde(default)]
    pub label: Option<usize>,
    pub features: Vec<String>,
    pub images: Vec<ImageEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub network: Option<String>,
    pub classes: Vec<ClassEntry>,
}

/// A manifest with every referenced file read and checked.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: DatasetManifest,
    pub classes: Vec<LoadedClass>,
}

#[derive(Debug, Clone)]
pub struct LoadedClass {
    pub class_id: String,
    pub label: usize,
    pub features: Vec<String>,
    pub images: Vec<LoadedImage>,
}

#[derive(Debug, Clone)]
pub struct LoadedImage {
    pub image_id: String,
    pub image: RgbImage,
    pub masks: Vec<FeatureMask>,
}

impl DatasetManifest {
    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let m: Self = serde_json::from_slice(bytes)?;
        m.check_structure()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_bytes(path, &serde_json::to_vec_pretty(self)?)
    }

    fn check_structure(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(Error::Config("manifest lists no classes".into()));
        }
        let mut class_ids = BTreeSet::new();
        let mut image_ids = BTreeSet::new();
        for class in &self.classes {
            if !class_ids.insert(&class.class_id) {
                return Err(Error::Config(format!("duplicate class id {}", class.class_id)));
            }
            if class.images.is_empty() {
                return Err(Error::Config(format!("class {} lists no images", class.class_id)));
            }
            for img in &class.images {
                if !image_ids.insert(&img.image_id) {
                    return Err(Error::Config(format!("duplicate image id {}", img.image_id)));
                }
                if img.masks.len() > class.features.len() {
                    return Err(Error::Config(format!(
                        "image {} lists {} masks but class {} has {} features",
                        img.image_id,
                        img.masks.len(),
                        class.class_id,
                        class.features.len()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn label_of(&self, class_index: usize) -> usize {
        self.classes[class_index].label.unwrap_or(class_index)
    }
}

impl Dataset {
    /// Reads the manifest and every image and mask it references. All
    /// missing or malformed files are reported together.
    pub fn load(manifest_path: &Path) -> Result<Self> {
        let bytes = crate::io::read_bytes(manifest_path)?;
        let manifest = DatasetManifest::from_json(&bytes)?;
        let root = manifest_path.parent().unwrap_or(Path::new(".")).to_path_buf();
        let mut problems = Vec::new();
        let mut classes = Vec::new();
        for (ci, class) in manifest.classes.iter().enumerate() {
            let mut images = Vec::new();
            for entry in &class.images {
                let image = match read_ppm(&root.join(&entry.image)) {
                    Ok(img) => img,
                    Err(e) => {
                        problems.push(e.to_string());
                        continue;
                    }
                };
                let mut masks = Vec::new();
                for (fi, path) in entry.masks.iter().enumerate() {
                    let Some(path) = path else { continue };
                    match read_pgm(&root.join(path)) {
                        Ok(m) if m.width != image.width || m.height != image.height => {
                            problems.push(format!(
                                "mask {path} is {}x{} but image {} is {}x{}",
                                m.width, m.height, entry.image_id, image.width, image.height
                            ));
                        }
                        Ok(m) => match FeatureMask::new(&entry.image_id, fi, m.height, m.width, m.data) {
                            Ok(mask) => masks.push(mask),
                            Err(e) => problems.push(format!("{path}: {e}")),
                        },
                        Err(e) => problems.push(e.to_string()),
                    }
                }
                images.push(LoadedImage {
                    image_id: entry.image_id.clone(),
                    image,
                    masks,
                });
            }
            classes.push(LoadedClass {
                class_id: class.class_id.clone(),
                label: manifest.label_of(ci),
                features: class.features.clone(),
                images,
            });
        }
        if !problems.is_empty() {
            return Err(Error::Config(format!(
                "{} problem(s) in manifest {}:\n  {}",
                problems.len(),
                manifest_path.display(),
                problems.join("\n  ")
            )));
        }
        Ok(Self {
            root,
            manifest,
            classes,
        })
    }

    /// Network path from the manifest, resolved against its directory.
    pub fn network_path(&self) -> Option<PathBuf> {
        self.manifest.network.as_ref().map(|p| self.root.join(p))
    }

    pub fn class(&self, class_id: &str) -> Result<&LoadedClass> {
        self.classes
            .iter()
            .find(|c| c.class_id == class_id)
            .ok_or_else(|| Error::Config(format!("class {class_id} not in manifest")))
    }
}
