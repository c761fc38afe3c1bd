//! Layer manifests: which tensor files hold which layer's activations.
//!
//! ```json
//! { "model_id": "resnet18", "dataset_id": "stl10", "finetuned_accuracy": 0.91,
//!   "layers": [ { "index": 0, "name": "stem", "tensor": "stem.npy", "shape": [56, 56, 64] } ] }
//! ```
//!
//! `tensor` may also be a list of paths, one per image, all with the declared
//! shape. Relative paths resolve against the manifest's directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{read_header, GridError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TensorRef {
    One(String),
    Many(Vec<String>),
}

impl TensorRef {
    fn paths(&self) -> Vec<&str> {
        match self {
            TensorRef::One(p) => vec![p.as_str()],
            TensorRef::Many(ps) => ps.iter().map(String::as_str).collect(),
        }
    }
}

/// One entry of the `layers` array, as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub index: i64,
    pub name: String,
    pub tensor: TensorRef,
    pub shape: Vec<usize>,
}

/// The manifest file as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestDocument {
    pub model_id: String,
    pub dataset_id: String,
    #[serde(default)]
    pub finetuned_accuracy: Option<f64>,
    pub layers: Vec<LayerRecord>,
}

impl ManifestDocument {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}

/// A validated layer with tensor paths resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerEntry {
    pub index: i64,
    pub name: String,
    pub tensors: Vec<PathBuf>,
    pub shape: Vec<usize>,
}

/// A validated manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerManifest {
    pub model_id: String,
    pub dataset_id: String,
    pub finetuned_accuracy: Option<f64>,
    pub layers: Vec<LayerEntry>,
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<LayerManifest, GridError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| GridError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let doc: ManifestDocument =
        serde_json::from_str(&text).map_err(|e| GridError::SchemaViolation(e.to_string()))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    validate(doc, base)
}

/// Validates a parsed document, resolving relative tensor paths against `base`.
pub fn validate(doc: ManifestDocument, base: &Path) -> Result<LayerManifest, GridError> {
    if doc.layers.is_empty() {
        return Err(GridError::SchemaViolation("manifest has no layers".into()));
    }
    if let Some(acc) = doc.finetuned_accuracy {
        if !(0.0..=1.0).contains(&acc) {
            return Err(GridError::SchemaViolation(format!(
                "finetuned_accuracy {acc} outside [0, 1]"
            )));
        }
    }
    for pair in doc.layers.windows(2) {
        if pair[1].index <= pair[0].index {
            return Err(GridError::NonMonotoneLayerIndex {
                previous: pair[0].index,
                next: pair[1].index,
            });
        }
    }

    let mut layers = Vec::with_capacity(doc.layers.len());
    for record in doc.layers {
        let rel = record.tensor.paths();
        if rel.is_empty() {
            return Err(GridError::SchemaViolation(format!(
                "layer '{}' lists no tensors",
                record.name
            )));
        }
        let mut tensors = Vec::with_capacity(rel.len());
        for p in rel {
            let resolved = base.join(p);
            if !resolved.is_file() {
                return Err(GridError::MissingTensorFile {
                    layer: record.name.clone(),
                    path: resolved,
                });
            }
            let header = read_header(&resolved)?;
            if header.shape != record.shape {
                return Err(GridError::ShapeMismatch {
                    layer: record.name.clone(),
                    path: resolved,
                    declared: record.shape.clone(),
                    found: header.shape,
                });
            }
            tensors.push(resolved);
        }
        layers.push(LayerEntry {
            index: record.index,
            name: record.name,
            tensors,
            shape: record.shape,
        });
    }

    Ok(LayerManifest {
        model_id: doc.model_id,
        dataset_id: doc.dataset_id,
        finetuned_accuracy: doc.finetuned_accuracy,
        layers,
    })
}
