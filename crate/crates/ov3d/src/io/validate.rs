//! Whole-dataset schema and cross-reference checks.

use std::collections::BTreeSet;
use std::path::Path;

use serde::Serialize;

use crate::error::Result;
use crate::io::manifests::{load_boxes2d, load_boxes3d, load_calibration, load_index};
use crate::io::ply::load_cloud;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, Serialize)]
pub struct Violation {
    pub severity: Severity,
    pub path: String,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{:?}] {}: {}", self.severity, self.path, self.message)
    }
}

/// Check every scene's files against their schemas and cross-reference
/// scene ids. Never panics on unreadable input; each problem becomes a
/// violation.
pub fn validate_dataset(dir: &Path) -> Result<Vec<Violation>> {
    let mut violations = Vec::new();
    fn err(violations: &mut Vec<Violation>, path: &Path, message: String) {
        violations.push(Violation {
            severity: Severity::Error,
            path: path.display().to_string(),
            message,
        });
    }

    let index_path = dir.join("index.json");
    let index = match load_index(&index_path) {
        Ok(i) => i,
        Err(e) => {
            err(&mut violations, &index_path, e.to_string());
            return Ok(violations);
        }
    };

    let mut seen = BTreeSet::new();
    for id in &index.scenes {
        if !seen.insert(id.clone()) {
            err(&mut violations, &index_path, format!("duplicate scene id {id:?}"));
        }
    }

    for id in &index.scenes {
        let ply_path = dir.join(format!("{id}.ply"));
        let cloud = match load_cloud(&ply_path) {
            Ok(c) => Some(c),
            Err(e) => {
                err(&mut violations, &ply_path, e.to_string());
                None
            }
        };
        let calib_path = dir.join(format!("{id}.calib.json"));
        match load_calibration(&calib_path) {
            Ok(_) => {}
            Err(e) => err(&mut violations, &calib_path, e.to_string()),
        }
        let b2d_path = dir.join(format!("{id}.boxes2d.json"));
        if b2d_path.exists() {
            match load_boxes2d(&b2d_path) {
                Ok(m) => {
                    if &m.scene_id != id {
                        err(&mut violations, &b2d_path, format!("scene_id {:?} does not match file scene {id:?}", m.scene_id));
                    }
                }
                Err(e) => err(&mut violations, &b2d_path, e.to_string()),
            }
        }
        let gt_path = dir.join(format!("{id}.gt.json"));
        if gt_path.exists() {
            match load_boxes3d(&gt_path) {
                Ok(m) => {
                    if &m.scene_id != id {
                        err(&mut violations, &gt_path, format!("scene_id {:?} does not match file scene {id:?}", m.scene_id));
                    }
                }
                Err(e) => err(&mut violations, &gt_path, e.to_string()),
            }
        }
        if let Some(c) = cloud {
            if c.is_empty() {
                violations.push(Violation {
                    severity: Severity::Warning,
                    path: ply_path.display().to_string(),
                    message: "empty point cloud".into(),
                });
            }
        }
    }

    // manifests that reference scenes absent from the index
    if let Ok(entries) = std::fs::read_dir(dir) {
        let mut files: Vec<_> = entries.filter_map(|e| e.ok()).map(|e| e.path()).collect();
        files.sort();
        for f in files {
            let name = f.file_name().and_then(|n| n.to_str()).unwrap_or("");
            for suffix in [".boxes2d.json", ".gt.json"] {
                if let Some(id) = name.strip_suffix(suffix) {
                    if !seen.contains(id) {
                        err(&mut violations, &f, format!("references scene {id:?} absent from the index"));
                    }
                }
            }
        }
    }

    Ok(violations)
}

pub fn has_errors(violations: &[Violation]) -> bool {
    violations.iter().any(|v| v.severity == Severity::Error)
}
