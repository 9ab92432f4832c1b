use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{identity_keys, read_embedding_file, EmbeddingSet};
use crate::error::{Error, Result};

/// TOML sidecar describing one (dataset, split) and its per-layer files.
///
/// ```toml
/// dataset_name = "cifar_fs"
/// split = "train"
/// backbone_name = "dinov2_vitl14"
/// class_names = ["apple", "aquarium_fish"]
///
/// [layer_files]
/// 21 = "cifar_fs_train_l21.feb"
/// 22 = "cifar_fs_train_l22.feb"
/// ```
///
/// Relative layer paths resolve against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub dataset_name: String,
    pub split: String,
    pub backbone_name: String,
    #[serde(default)]
    pub class_names: Vec<String>,
    #[serde(with = "layer_map")]
    pub layer_files: BTreeMap<u16, PathBuf>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

mod layer_map {
    use std::collections::BTreeMap;
    use std::path::PathBuf;

    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(map: &BTreeMap<u16, PathBuf>, s: S) -> Result<S::Ok, S::Error> {
        s.collect_map(
            map.iter()
                .map(|(k, v)| (k.to_string(), v.to_string_lossy().into_owned())),
        )
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<u16, PathBuf>, D::Error> {
        let raw = BTreeMap::<String, String>::deserialize(d)?;
        raw.into_iter()
            .map(|(k, v)| {
                let layer: u16 = k
                    .trim()
                    .parse()
                    .map_err(|_| D::Error::custom(format!("layer key {k:?} is not an integer")))?;
                Ok((layer, PathBuf::from(v)))
            })
            .collect()
    }
}

impl DatasetManifest {
    pub fn new(dataset_name: impl Into<String>, split: impl Into<String>, backbone_name: impl Into<String>) -> Self {
        Self {
            dataset_name: dataset_name.into(),
            split: split.into(),
            backbone_name: backbone_name.into(),
            class_names: Vec::new(),
            layer_files: BTreeMap::new(),
            base_dir: PathBuf::new(),
        }
    }

    pub fn parse(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self, toml::de::Error> {
        let mut m: DatasetManifest = toml::from_str(text)?;
        m.base_dir = base_dir.into();
        Ok(m)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, base).map_err(|e| Error::Manifest {
            path: path.to_path_buf(),
            reason: e.message().to_string(),
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_toml()).map_err(|e| Error::io(path, e))
    }

    pub fn layer_ids(&self) -> Vec<u16> {
        self.layer_files.keys().copied().collect()
    }

    pub fn layer_path(&self, layer_id: u16) -> Option<PathBuf> {
        self.layer_files.get(&layer_id).map(|p| {
            if p.is_absolute() {
                p.clone()
            } else {
                self.base_dir.join(p)
            }
        })
    }

    /// Loads one layer's file and attaches the manifest's class names.
    pub fn load_layer(&self, layer_id: u16) -> Result<EmbeddingSet> {
        let path = self
            .layer_path(layer_id)
            .ok_or_else(|| Error::InsufficientData(format!("manifest has no layer {layer_id}")))?;
        let set = read_embedding_file(&path)?;
        if set.layer_id() != layer_id {
            return Err(Error::Manifest {
                path,
                reason: format!("file header says layer {}, manifest says {layer_id}", set.layer_id()),
            });
        }
        if self.class_names.is_empty() {
            Ok(set)
        } else {
            Ok(set.with_class_names(self.class_names.clone()))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerReport {
    pub layer_id: u16,
    pub path: PathBuf,
    pub class_count: Option<u32>,
    pub item_count: Option<u64>,
    pub feature_dim: Option<u32>,
    pub tokens_per_item: Option<u32>,
    pub issues: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub dataset_name: String,
    pub split: String,
    pub layers: Vec<LayerReport>,
    /// Problems spanning more than one layer.
    pub issues: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.issues.is_empty() && self.layers.iter().all(|l| l.issues.is_empty())
    }

    pub fn all_issues(&self) -> Vec<String> {
        let mut out = self.issues.clone();
        for l in &self.layers {
            out.extend(l.issues.iter().map(|i| format!("layer {}: {i}", l.layer_id)));
        }
        out
    }
}

type IdentityKeys = Vec<(u64, u16, u32)>;

/// Checks every layer file and their mutual consistency. Never fails: problems are report entries.
pub fn validate_manifest(manifest: &DatasetManifest) -> ValidationReport {
    let mut layers = Vec::new();
    let mut issues = Vec::new();
    // (layer, class_count, identity keys) of the first readable layer
    let mut reference: Option<(u16, u32, IdentityKeys)> = None;

    if manifest.layer_files.is_empty() {
        issues.push("manifest lists no layer files".to_string());
    }

    for &layer_id in manifest.layer_files.keys() {
        let path = manifest.layer_path(layer_id).expect("key exists");
        let mut report = LayerReport {
            layer_id,
            path: path.clone(),
            class_count: None,
            item_count: None,
            feature_dim: None,
            tokens_per_item: None,
            issues: Vec::new(),
        };
        if !path.exists() {
            report.issues.push(format!("missing file {}", path.display()));
            layers.push(report);
            continue;
        }
        let set = match read_embedding_file(&path) {
            Ok(set) => set,
            Err(e) => {
                report.issues.push(format!("unreadable: {e}"));
                layers.push(report);
                continue;
            }
        };
        let h = set.header;
        report.class_count = Some(h.class_count);
        report.item_count = Some(h.item_count);
        report.feature_dim = Some(h.feature_dim);
        report.tokens_per_item = Some(h.tokens_per_item);
        if h.layer_id != layer_id {
            report
                .issues
                .push(format!("header layer_id {} does not match manifest key", h.layer_id));
        }
        if !manifest.class_names.is_empty() && manifest.class_names.len() != h.class_count as usize {
            report.issues.push(format!(
                "class_count {} but manifest names {} classes",
                h.class_count,
                manifest.class_names.len()
            ));
        }
        let keys = identity_keys(&set);
        match &reference {
            None => reference = Some((layer_id, h.class_count, keys)),
            Some((ref_layer, ref_classes, ref_keys)) => {
                if *ref_classes != h.class_count {
                    report.issues.push(format!(
                        "class_count mismatch: {} here, {} in layer {}",
                        h.class_count, ref_classes, ref_layer
                    ));
                }
                if *ref_keys != keys {
                    report
                        .issues
                        .push(format!("item identities differ from layer {ref_layer}"));
                }
            }
        }
        layers.push(report);
    }

    ValidationReport {
        dataset_name: manifest.dataset_name.clone(),
        split: manifest.split.clone(),
        layers,
        issues,
    }
}
