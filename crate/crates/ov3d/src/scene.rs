//! Core domain types: point clouds, cameras, boxes, vocabularies, scenes.
//!
//! All types are immutable values after construction and validate their
//! invariants at the boundary, so downstream code can assume finiteness,
//! positive extents, and wrapped angles.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Depth at or below this is never "in front of" the camera.
pub const MIN_DEPTH: f64 = 1e-6;

/// Homogeneous scale below this flags the projection invalid.
pub const MIN_HOMOGENEOUS_W: f64 = 1e-12;

/// Wrap an angle to [-pi, pi).
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut r = (a + std::f64::consts::PI).rem_euclid(two_pi) - std::f64::consts::PI;
    if r >= std::f64::consts::PI {
        r -= two_pi;
    }
    r
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    points: Vec<[f64; 3]>,
}

impl PointCloud {
    pub fn new(points: Vec<[f64; 3]>) -> Result<Self> {
        for (i, p) in points.iter().enumerate() {
            if !p.iter().all(|c| c.is_finite()) {
                return Err(Error::NonFinite { context: format!("point cloud entry {i}") });
            }
        }
        Ok(PointCloud { points })
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// 3x4 projection (pixels from homogeneous meters) plus image size.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraModel {
    p: [[f64; 4]; 3],
    width: u32,
    height: u32,
}

impl CameraModel {
    pub fn new(p: [[f64; 4]; 3], width: u32, height: u32) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidCamera("image dimensions must be positive".into()));
        }
        if !p.iter().flatten().all(|v| v.is_finite()) {
            return Err(Error::InvalidCamera("projection matrix has non-finite entries".into()));
        }
        // left 3x3 block must be invertible
        let det = p[0][0] * (p[1][1] * p[2][2] - p[1][2] * p[2][1])
            - p[0][1] * (p[1][0] * p[2][2] - p[1][2] * p[2][0])
            + p[0][2] * (p[1][0] * p[2][1] - p[1][1] * p[2][0]);
        if det.abs() <= 1e-9 {
            return Err(Error::InvalidCamera(format!(
                "left 3x3 sub-block is singular (det {det:e})"
            )));
        }
        Ok(CameraModel { p, width, height })
    }

    /// Pinhole camera with focal length f and principal point (cx, cy).
    pub fn pinhole(f: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        CameraModel::new(
            [[f, 0.0, cx, 0.0], [0.0, f, cy, 0.0], [0.0, 0.0, 1.0, 0.0]],
            width,
            height,
        )
    }

    pub fn matrix(&self) -> &[[f64; 4]; 3] {
        &self.p
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }
}

/// A projected point: pixel coordinates plus depth in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
}

/// Project a 3D point. `None` when the homogeneous scale is too close to
/// zero for the division to mean anything.
pub fn project_point(cam: &CameraModel, p: [f64; 3]) -> Option<Projection> {
    let m = cam.matrix();
    let w = m[2][0] * p[0] + m[2][1] * p[1] + m[2][2] * p[2] + m[2][3];
    if w.abs() < MIN_HOMOGENEOUS_W {
        return None;
    }
    let u = (m[0][0] * p[0] + m[0][1] * p[1] + m[0][2] * p[2] + m[0][3]) / w;
    let v = (m[1][0] * p[0] + m[1][1] * p[1] + m[1][2] * p[2] + m[1][3]) / w;
    Some(Projection { u, v, depth: w })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Box2D {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phrase: Option<String>,
}

impl Box2D {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        if ![x1, y1, x2, y2].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidBox2d("non-finite coordinate".into()));
        }
        if x1 >= x2 || y1 >= y2 {
            return Err(Error::InvalidBox2d(format!(
                "corners must be ordered: ({x1},{y1})..({x2},{y2})"
            )));
        }
        Ok(Box2D { x1, y1, x2, y2, score: None, phrase: None })
    }

    pub fn area(&self) -> f64 {
        (self.x2 - self.x1) * (self.y2 - self.y1)
    }
}

/// Clip a 2D box to the image. `None` when the clipped area falls below
/// one square pixel.
pub fn clamp_box2d(b: &Box2D, cam: &CameraModel) -> Option<Box2D> {
    let w = cam.width() as f64;
    let h = cam.height() as f64;
    let x1 = b.x1.clamp(0.0, w);
    let x2 = b.x2.clamp(0.0, w);
    let y1 = b.y1.clamp(0.0, h);
    let y2 = b.y2.clamp(0.0, h);
    if (x2 - x1) * (y2 - y1) < 1.0 {
        return None;
    }
    Some(Box2D { x1, y1, x2, y2, score: b.score, phrase: b.phrase.clone() })
}

/// 7-DOF oriented box: center, size, yaw about the z (up) axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Box3D {
    center: [f64; 3],
    size: [f64; 3],
    yaw: f64,
}

impl Box3D {
    pub fn new(center: [f64; 3], size: [f64; 3], yaw: f64) -> Result<Self> {
        if !center.iter().chain(size.iter()).all(|v| v.is_finite()) || !yaw.is_finite() {
            return Err(Error::InvalidBox3d("non-finite field".into()));
        }
        if size.iter().any(|&s| s <= 0.0) {
            return Err(Error::InvalidBox3d(format!("size must be positive, got {size:?}")));
        }
        Ok(Box3D { center, size, yaw: wrap_angle(yaw) })
    }

    pub fn center(&self) -> [f64; 3] {
        self.center
    }

    pub fn size(&self) -> [f64; 3] {
        self.size
    }

    pub fn yaw(&self) -> f64 {
        self.yaw
    }

    pub fn volume(&self) -> f64 {
        self.size[0] * self.size[1] * self.size[2]
    }

    pub fn translated(&self, d: [f64; 3]) -> Box3D {
        Box3D {
            center: [self.center[0] + d[0], self.center[1] + d[1], self.center[2] + d[2]],
            size: self.size,
            yaw: self.yaw,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassVocabulary {
    names: Vec<String>,
}

impl ClassVocabulary {
    pub fn new(names: Vec<String>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for n in &names {
            if n.is_empty() {
                return Err(Error::InvalidVocabulary("empty category name".into()));
            }
            if !seen.insert(n.clone()) {
                return Err(Error::InvalidVocabulary(format!("duplicate category {n:?}")));
            }
        }
        Ok(ClassVocabulary { names })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub scene_id: String,
    pub cloud: PointCloud,
    pub camera: CameraModel,
}

impl Scene {
    pub fn new(scene_id: impl Into<String>, cloud: PointCloud, camera: CameraModel) -> Result<Self> {
        let scene_id = scene_id.into();
        if scene_id.is_empty() {
            return Err(Error::Schema { path: "<scene>".into(), message: "empty scene_id".into() });
        }
        Ok(Scene { scene_id, cloud, camera })
    }
}
