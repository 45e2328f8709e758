//! JSON manifest schemas shared by every pipeline stage: calibration,
//! 2D/3D box files, embedding manifests, description manifests, and the
//! dataset index.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::LabeledBox3D;
use crate::losses::{FeatureVec, Modality};
use crate::scene::{Box2D, Box3D, CameraModel};

pub const SCHEMA_VERSION: &str = "1";

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    serde_json::from_str(&text).map_err(|e| Error::Json { path: path.display().to_string(), source: e })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Json { path: path.display().to_string(), source: e })?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

// ---- calibration ----

#[derive(Debug, Serialize, Deserialize)]
struct CalibrationDoc {
    #[serde(rename = "P")]
    p: Vec<Vec<f64>>,
    width: u32,
    height: u32,
}

pub fn load_calibration(path: &Path) -> Result<CameraModel> {
    let doc: CalibrationDoc = read_json(path)?;
    if doc.p.len() != 3 || doc.p.iter().any(|row| row.len() != 4) {
        return Err(Error::schema(
            path.display().to_string(),
            format!("P must be 3 rows of 4, got {} rows of {:?}", doc.p.len(), doc.p.iter().map(|r| r.len()).collect::<Vec<_>>()),
        ));
    }
    let mut p = [[0.0; 4]; 3];
    for (r, row) in doc.p.iter().enumerate() {
        p[r].copy_from_slice(row);
    }
    CameraModel::new(p, doc.width, doc.height)
}

pub fn save_calibration(path: &Path, cam: &CameraModel) -> Result<()> {
    let doc = CalibrationDoc {
        p: cam.matrix().iter().map(|r| r.to_vec()).collect(),
        width: cam.width(),
        height: cam.height(),
    };
    write_json(path, &doc)
}

// ---- 2D box manifest ----

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Box2dManifest {
    pub scene_id: String,
    pub boxes: Vec<Box2D>,
}

pub fn load_boxes2d(path: &Path) -> Result<Box2dManifest> {
    let doc: Box2dManifest = read_json(path)?;
    for (i, b) in doc.boxes.iter().enumerate() {
        if !(b.x1 < b.x2 && b.y1 < b.y2) {
            return Err(Error::schema(
                path.display().to_string(),
                format!("box {i} has unordered corners"),
            ));
        }
    }
    Ok(doc)
}

pub fn save_boxes2d(path: &Path, manifest: &Box2dManifest) -> Result<()> {
    write_json(path, manifest)
}

// ---- 3D box files (ground truth and predictions) ----

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Box3dRecord {
    pub center: [f64; 3],
    pub size: [f64; 3],
    pub yaw: f64,
    pub class: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Box3dManifest {
    pub scene_id: String,
    pub boxes: Vec<Box3dRecord>,
}

impl Box3dManifest {
    pub fn to_labeled(&self) -> Result<Vec<LabeledBox3D>> {
        self.boxes
            .iter()
            .map(|r| {
                Ok(LabeledBox3D {
                    bbox: Box3D::new(r.center, r.size, r.yaw)?,
                    category: r.class.clone(),
                    score: r.score,
                })
            })
            .collect()
    }

    pub fn from_labeled(scene_id: &str, boxes: &[LabeledBox3D]) -> Self {
        Box3dManifest {
            scene_id: scene_id.to_string(),
            boxes: boxes
                .iter()
                .map(|b| Box3dRecord {
                    center: b.bbox.center(),
                    size: b.bbox.size(),
                    yaw: b.bbox.yaw(),
                    class: b.category.clone(),
                    score: b.score,
                })
                .collect(),
        }
    }
}

pub fn load_boxes3d(path: &Path) -> Result<Box3dManifest> {
    let doc: Box3dManifest = read_json(path)?;
    for (i, b) in doc.boxes.iter().enumerate() {
        Box3D::new(b.center, b.size, b.yaw).map_err(|e| {
            Error::schema(path.display().to_string(), format!("box {i}: {e}"))
        })?;
    }
    Ok(doc)
}

pub fn save_boxes3d(path: &Path, manifest: &Box3dManifest) -> Result<()> {
    write_json(path, manifest)
}

/// Load a per-scene 3D box collection from either a directory of
/// `*.json` manifests or a single file holding one manifest or an array.
/// In a directory, dataset companion files (`index.json`, `*.calib.json`,
/// `*.boxes2d.json`) are skipped so a dataset directory can serve as the
/// ground-truth source directly.
pub fn load_boxes3d_collection(path: &Path) -> Result<BTreeMap<String, Vec<LabeledBox3D>>> {
    let mut out = BTreeMap::new();
    let mut add = |m: Box3dManifest| -> Result<()> {
        let labeled = m.to_labeled()?;
        if out.insert(m.scene_id.clone(), labeled).is_some() {
            return Err(Error::schema(
                path.display().to_string(),
                format!("duplicate scene_id {:?}", m.scene_id),
            ));
        }
        Ok(())
    };
    if path.is_dir() {
        let mut files: Vec<_> = std::fs::read_dir(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| {
                let Some(name) = p.file_name().and_then(|n| n.to_str()) else {
                    return false;
                };
                name.ends_with(".json")
                    && name != "index.json"
                    && !name.ends_with(".calib.json")
                    && !name.ends_with(".boxes2d.json")
            })
            .collect();
        files.sort();
        for f in files {
            add(load_boxes3d(&f)?)?;
        }
    } else {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| Error::Json { path: path.display().to_string(), source: e })?;
        if value.is_array() {
            let manifests: Vec<Box3dManifest> = serde_json::from_value(value)
                .map_err(|e| Error::Json { path: path.display().to_string(), source: e })?;
            for m in manifests {
                add(m)?;
            }
        } else {
            let m: Box3dManifest = serde_json::from_value(value)
                .map_err(|e| Error::Json { path: path.display().to_string(), source: e })?;
            add(m)?;
        }
    }
    Ok(out)
}

// ---- embedding manifest ----

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EmbeddingEntry {
    pub id: String,
    pub modality: Modality,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EmbeddingManifest {
    pub dim: usize,
    pub entries: Vec<EmbeddingEntry>,
}

impl EmbeddingManifest {
    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for e in &self.entries {
            if !seen.insert(e.id.as_str()) {
                return Err(Error::DuplicateId(e.id.clone()));
            }
            if e.vector.len() != self.dim {
                return Err(Error::DimensionMismatch {
                    id: e.id.clone(),
                    expected: self.dim,
                    got: e.vector.len(),
                });
            }
            if let Some(index) = e.vector.iter().position(|v| !v.is_finite()) {
                return Err(Error::BadVector { id: e.id.clone(), index });
            }
        }
        Ok(())
    }

    /// Entries as normalized feature vectors, in manifest order.
    pub fn to_features(&self) -> Result<Vec<FeatureVec>> {
        self.validate()?;
        self.entries
            .iter()
            .map(|e| {
                let norm = e.vector.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm < 1e-12 {
                    return Err(Error::DegenerateInput(format!("zero-norm embedding {:?}", e.id)));
                }
                let values = e.vector.iter().map(|v| v / norm).collect();
                let mut f = FeatureVec::new(e.id.clone(), e.modality, values)?;
                if let Some(c) = &e.category {
                    f = f.with_category(c.clone());
                }
                Ok(f)
            })
            .collect()
    }
}

pub fn load_embedding_manifest(path: &Path) -> Result<EmbeddingManifest> {
    let doc: EmbeddingManifest = read_json(path)?;
    doc.validate()?;
    Ok(doc)
}

pub fn save_embedding_manifest(path: &Path, manifest: &EmbeddingManifest) -> Result<()> {
    manifest.validate()?;
    write_json(path, manifest)
}

// ---- description manifests ----

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DescriptionManifest {
    pub class: String,
    pub texts: Vec<String>,
}

pub fn load_descriptions(path: &Path) -> Result<DescriptionManifest> {
    read_json(path)
}

pub fn save_descriptions(path: &Path, doc: &DescriptionManifest) -> Result<()> {
    write_json(path, doc)
}

// ---- dataset index ----

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DatasetIndex {
    pub schema_version: String,
    pub scenes: Vec<String>,
}

pub fn load_index(path: &Path) -> Result<DatasetIndex> {
    read_json(path)
}

pub fn save_index(path: &Path, index: &DatasetIndex) -> Result<()> {
    write_json(path, index)
}

// ---- vocabulary file: one name per line ----

pub fn load_vocab(path: &Path) -> Result<crate::scene::ClassVocabulary> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let names: Vec<String> = text
        .lines()
        .map(|l| l.trim().to_string())
        .filter(|l| !l.is_empty())
        .collect();
    crate::scene::ClassVocabulary::new(names)
}

pub fn save_vocab(path: &Path, vocab: &crate::scene::ClassVocabulary) -> Result<()> {
    let mut out = String::new();
    for n in vocab.names() {
        out.push_str(n);
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}
