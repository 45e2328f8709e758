//! Synthetic indoor scene generator with exact ground truth.
//!
//! Produces point clouds, calibrations, 2D detection boxes, and 3D GT
//! boxes that exercise the lifting pipeline end to end. Generation is
//! deterministic per (seed, scene index) and independent of thread count.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::LabeledBox3D;
use crate::io::manifests::{
    save_boxes2d, save_boxes3d, save_calibration, save_index, Box2dManifest, Box3dManifest,
    DatasetIndex, SCHEMA_VERSION,
};
use crate::io::ply::save_ply;
use crate::rng::Rng;
use crate::scene::{clamp_box2d, project_point, Box2D, Box3D, CameraModel, PointCloud, Scene};

/// Categories assigned uniformly at random to generated objects.
pub const SYNTH_CATEGORIES: [&str; 6] = ["chair", "table", "sofa", "bed", "desk", "cabinet"];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_scenes: usize,
    pub objects_per_scene: (usize, usize),
    pub points_per_object: (usize, usize),
    /// Gaussian jitter added to object points, meters.
    pub noise_sigma: f64,
    /// Fraction of each scene's points that is uniform room clutter.
    pub clutter_fraction: f64,
    /// Room bounds in camera coordinates: (min, max) per axis, z forward.
    pub room_min: [f64; 3],
    pub room_max: [f64; 3],
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        // room sits in front of a SUN RGB-D-like pinhole camera at the origin
        SynthSpec {
            n_scenes: 10,
            objects_per_scene: (1, 5),
            points_per_object: (500, 1000),
            noise_sigma: 0.01,
            clutter_fraction: 0.05,
            room_min: [-1.6, -1.1, 3.0],
            room_max: [1.6, 1.1, 8.0],
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_scenes == 0 {
            return Err(Error::InvalidParams("n_scenes must be >= 1".into()));
        }
        if self.objects_per_scene.0 > self.objects_per_scene.1 || self.objects_per_scene.0 == 0 {
            return Err(Error::InvalidParams(format!(
                "bad objects_per_scene range {:?}",
                self.objects_per_scene
            )));
        }
        if self.points_per_object.0 > self.points_per_object.1 || self.points_per_object.0 == 0 {
            return Err(Error::InvalidParams(format!(
                "bad points_per_object range {:?}",
                self.points_per_object
            )));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidParams("noise_sigma must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.clutter_fraction) {
            return Err(Error::InvalidParams("clutter_fraction must be in [0,1)".into()));
        }
        if (0..3).any(|a| self.room_min[a] >= self.room_max[a]) {
            return Err(Error::InvalidParams("room volume must be positive".into()));
        }
        Ok(())
    }

    pub fn camera(&self) -> CameraModel {
        CameraModel::pinhole(525.0, 320.0, 240.0, 640, 480).expect("fixed pinhole is valid")
    }
}

#[derive(Debug, Clone)]
pub struct GeneratedScene {
    pub scene: Scene,
    pub gt: Vec<LabeledBox3D>,
    pub boxes2d: Vec<Box2D>,
}

const MAX_PLACEMENT_ATTEMPTS: usize = 1000;
/// Minimum clearance between GT boxes so clustering can separate them.
const MIN_GAP: f64 = 0.35;
/// Minimum clearance between projected 2D boxes. The generator has no
/// occlusion model, so a frustum overlapping two objects would see both
/// point sets at full density; keeping detections disjoint in image space
/// keeps each frustum single-object.
const MIN_PIXEL_GAP: f64 = 10.0;

fn sample_box(spec: &SynthSpec, rng: &mut Rng) -> Option<Box3D> {
    let mut size = [0.0; 3];
    for s in &mut size {
        *s = rng.range_f64(0.5, 1.4);
    }
    let mut center = [0.0; 3];
    for a in 0..3 {
        let half = size[a] / 2.0;
        let lo = spec.room_min[a] + half;
        let hi = spec.room_max[a] - half;
        if lo >= hi {
            return None;
        }
        center[a] = rng.range_f64(lo, hi);
    }
    Box3D::new(center, size, 0.0).ok()
}

/// Image-clamped AABB of the projected 3D corners.
fn project_box2d(camera: &CameraModel, b: &Box3D) -> Option<Box2D> {
    let corners = crate::geometry::box_corners(b);
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for c in corners {
        let pr = project_point(camera, c)?;
        lo[0] = lo[0].min(pr.u);
        lo[1] = lo[1].min(pr.v);
        hi[0] = hi[0].max(pr.u);
        hi[1] = hi[1].max(pr.v);
    }
    let raw = Box2D::new(lo[0], lo[1], hi[0], hi[1]).ok()?;
    clamp_box2d(&raw, camera)
}

fn rects_separated(a: &Box2D, b: &Box2D) -> bool {
    a.x2 + MIN_PIXEL_GAP <= b.x1
        || b.x2 + MIN_PIXEL_GAP <= a.x1
        || a.y2 + MIN_PIXEL_GAP <= b.y1
        || b.y2 + MIN_PIXEL_GAP <= a.y1
}

fn boxes_too_close(a: &Box3D, b: &Box3D) -> bool {
    for axis in 0..3 {
        let gap = (a.center()[axis] - b.center()[axis]).abs()
            - (a.size()[axis] + b.size()[axis]) / 2.0;
        if gap >= MIN_GAP {
            return false;
        }
    }
    true
}

/// Generate one scene. Deterministic in (spec.seed, index).
pub fn generate_scene(spec: &SynthSpec, index: usize) -> Result<GeneratedScene> {
    spec.validate()?;
    let mut rng = Rng::for_stream(spec.seed, index as u64);
    let camera = spec.camera();

    let mut n_objects =
        spec.objects_per_scene.0 + rng.range_usize(spec.objects_per_scene.1 - spec.objects_per_scene.0 + 1);

    let mut placed: Vec<(Box3D, Box2D)> = Vec::new();
    'placing: loop {
        placed.clear();
        for _ in 0..n_objects {
            let mut ok = false;
            for _ in 0..MAX_PLACEMENT_ATTEMPTS {
                if let Some(candidate) = sample_box(spec, &mut rng) {
                    let Some(projected) = project_box2d(&camera, &candidate) else {
                        continue;
                    };
                    if placed.iter().all(|(p3, p2)| {
                        !boxes_too_close(p3, &candidate) && rects_separated(p2, &projected)
                    }) {
                        placed.push((candidate, projected));
                        ok = true;
                        break;
                    }
                }
            }
            if !ok {
                if n_objects > 1 {
                    n_objects -= 1;
                    log::warn!("scene {index}: placement failed, retrying with {n_objects} objects");
                    continue 'placing;
                }
                return Err(Error::DegenerateInput(format!(
                    "cannot place a single object in room {:?}..{:?}",
                    spec.room_min, spec.room_max
                )));
            }
        }
        break;
    }

    let mut points: Vec<[f64; 3]> = Vec::new();
    let mut gt = Vec::new();
    let mut boxes2d = Vec::new();
    for (b, projected) in &placed {
        let n_pts = spec.points_per_object.0
            + rng.range_usize(spec.points_per_object.1 - spec.points_per_object.0 + 1);
        for _ in 0..n_pts {
            let mut p = [0.0; 3];
            for a in 0..3 {
                p[a] = b.center()[a] + rng.range_f64(-0.5, 0.5) * b.size()[a];
                if spec.noise_sigma > 0.0 {
                    p[a] += spec.noise_sigma * rng.next_normal();
                }
            }
            points.push(p);
        }

        let category = SYNTH_CATEGORIES[rng.range_usize(SYNTH_CATEGORIES.len())];
        gt.push(LabeledBox3D { bbox: *b, category: category.into(), score: None });

        let mut box2d = projected.clone();
        box2d.score = Some(1.0);
        box2d.phrase = Some(category.to_string());
        boxes2d.push(box2d);
    }

    let n_object_points = points.len();
    if spec.clutter_fraction > 0.0 {
        let n_clutter = ((n_object_points as f64 * spec.clutter_fraction)
            / (1.0 - spec.clutter_fraction))
            .round() as usize;
        for _ in 0..n_clutter {
            let mut p = [0.0; 3];
            for a in 0..3 {
                p[a] = rng.range_f64(spec.room_min[a], spec.room_max[a]);
            }
            points.push(p);
        }
    }

    let scene = Scene::new(scene_id(index), PointCloud::new(points)?, camera)?;
    Ok(GeneratedScene { scene, gt, boxes2d })
}

pub fn scene_id(index: usize) -> String {
    format!("scene_{index:04}")
}

/// Write a generated dataset to a directory: per-scene PLY, calibration,
/// 2D-box manifest, GT boxes, and an index file.
pub fn write_dataset(dir: &Path, scenes: &[GeneratedScene]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let mut ids = Vec::new();
    for g in scenes {
        let id = &g.scene.scene_id;
        save_ply(&dir.join(format!("{id}.ply")), &g.scene.cloud)?;
        save_calibration(&dir.join(format!("{id}.calib.json")), &g.scene.camera)?;
        save_boxes2d(
            &dir.join(format!("{id}.boxes2d.json")),
            &Box2dManifest { scene_id: id.clone(), boxes: g.boxes2d.clone() },
        )?;
        save_boxes3d(
            &dir.join(format!("{id}.gt.json")),
            &Box3dManifest::from_labeled(id, &g.gt),
        )?;
        ids.push(id.clone());
    }
    save_index(
        &dir.join("index.json"),
        &DatasetIndex { schema_version: SCHEMA_VERSION.into(), scenes: ids },
    )
}
