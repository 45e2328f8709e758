//! Pseudo-label lifting: frustum selection, DBSCAN clustering, box fitting.
//!
//! A 2D detection box selects the cloud points whose projection lands
//! inside it; density clustering strips clutter at other depths; the
//! surviving cluster is fit with a tight 3D box.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{clamp_box2d, project_point, Box2D, Box3D, CameraModel, PointCloud, Scene, MIN_DEPTH};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FitMode {
    #[default]
    AxisAligned,
    BevPca,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LiftParams {
    /// DBSCAN neighborhood radius in meters.
    pub eps: f64,
    /// Core-point threshold (self included).
    pub min_pts: usize,
    /// Minimum cluster size for a valid lift.
    pub min_cluster: usize,
    pub fit_mode: FitMode,
}

impl Default for LiftParams {
    fn default() -> Self {
        LiftParams { eps: 0.15, min_pts: 10, min_cluster: 20, fit_mode: FitMode::AxisAligned }
    }
}

impl LiftParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps.is_finite() && self.eps > 0.0) {
            return Err(Error::InvalidParams(format!("eps must be positive, got {}", self.eps)));
        }
        if self.min_pts < 1 {
            return Err(Error::InvalidParams("min_pts must be >= 1".into()));
        }
        if self.min_cluster < self.min_pts {
            return Err(Error::InvalidParams(format!(
                "min_cluster ({}) must be >= min_pts ({})",
                self.min_cluster, self.min_pts
            )));
        }
        Ok(())
    }
}

/// Per-point cluster assignment; `None` is noise. Cluster ids are
/// contiguous from 0 in discovery order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterLabels {
    pub labels: Vec<Option<usize>>,
    pub n_clusters: usize,
}

/// Why a lift produced no pseudo-label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LiftRejection {
    DegenerateBox2d,
    EmptyFrustum,
    AllNoise,
    ClusterTooSmall,
}

impl std::fmt::Display for LiftRejection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            LiftRejection::DegenerateBox2d => "degenerate-2d-box",
            LiftRejection::EmptyFrustum => "empty-frustum",
            LiftRejection::AllNoise => "all-noise",
            LiftRejection::ClusterTooSmall => "cluster-too-small",
        };
        f.write_str(s)
    }
}

/// Indices of points whose projection is valid, in front of the camera,
/// and inside the (clamped) 2D box.
pub fn frustum_points(cloud: &PointCloud, cam: &CameraModel, b: &Box2D) -> Vec<usize> {
    cloud
        .points()
        .iter()
        .enumerate()
        .filter_map(|(i, &p)| {
            let proj = project_point(cam, p)?;
            if proj.depth > MIN_DEPTH
                && proj.u >= b.x1
                && proj.u <= b.x2
                && proj.v >= b.y1
                && proj.v <= b.y2
            {
                Some(i)
            } else {
                None
            }
        })
        .collect()
}

/// Standard DBSCAN over 3D points with Euclidean distance. Deterministic:
/// seeds are visited in ascending index order and expansion is FIFO, so
/// border points join the first core cluster that reaches them.
pub fn dbscan(points: &[[f64; 3]], eps: f64, min_pts: usize) -> ClusterLabels {
    let n = points.len();
    let eps2 = eps * eps;
    let mut labels: Vec<Option<usize>> = vec![None; n];
    let mut visited = vec![false; n];
    let mut n_clusters = 0usize;

    let neighbors = |i: usize| -> Vec<usize> {
        let pi = points[i];
        (0..n)
            .filter(|&j| {
                let d = [points[j][0] - pi[0], points[j][1] - pi[1], points[j][2] - pi[2]];
                d[0] * d[0] + d[1] * d[1] + d[2] * d[2] <= eps2
            })
            .collect()
    };

    for i in 0..n {
        if visited[i] {
            continue;
        }
        visited[i] = true;
        let nbrs = neighbors(i);
        if nbrs.len() < min_pts {
            continue; // stays noise unless a later cluster claims it as border
        }
        let cluster = n_clusters;
        n_clusters += 1;
        labels[i] = Some(cluster);
        let mut queue: std::collections::VecDeque<usize> = nbrs.into();
        while let Some(j) = queue.pop_front() {
            if labels[j].is_none() {
                labels[j] = Some(cluster);
            }
            if visited[j] {
                continue;
            }
            visited[j] = true;
            let jn = neighbors(j);
            if jn.len() >= min_pts {
                queue.extend(jn);
            }
        }
    }
    ClusterLabels { labels, n_clusters }
}

/// Fit a tight box around points. Axis-aligned mode yields yaw 0; bev-pca
/// orients the footprint along the principal direction of the xy spread.
/// Extents are floored at 1e-4 m so single points still form a valid box.
pub fn fit_box(points: &[[f64; 3]], mode: FitMode) -> Result<Box3D> {
    const FLOOR: f64 = 1e-4;
    if points.is_empty() {
        return Err(Error::DegenerateInput("cannot fit a box to zero points".into()));
    }
    let yaw = match mode {
        FitMode::AxisAligned => 0.0,
        FitMode::BevPca => bev_principal_angle(points),
    };
    let (s, c) = yaw.sin_cos();
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in points {
        // rotate into the yaw-aligned frame
        let r = [c * p[0] + s * p[1], -s * p[0] + c * p[1], p[2]];
        for a in 0..3 {
            lo[a] = lo[a].min(r[a]);
            hi[a] = hi[a].max(r[a]);
        }
    }
    let mid = [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0, (lo[2] + hi[2]) / 2.0];
    // rotate the center back to world
    let center = [c * mid[0] - s * mid[1], s * mid[0] + c * mid[1], mid[2]];
    let size = [
        (hi[0] - lo[0]).max(FLOOR),
        (hi[1] - lo[1]).max(FLOOR),
        (hi[2] - lo[2]).max(FLOOR),
    ];
    Box3D::new(center, size, yaw)
}

/// Orientation of the principal eigenvector of the 2x2 covariance of (x, y).
fn bev_principal_angle(points: &[[f64; 3]]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p[0]).sum::<f64>() / n;
    let my = points.iter().map(|p| p[1]).sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in points {
        let dx = p[0] - mx;
        let dy = p[1] - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    // eigenvector of [[sxx, sxy], [sxy, syy]] for the larger eigenvalue
    0.5 * (2.0 * sxy).atan2(sxx - syy)
}

/// End-to-end Eq.-style lift of one 2D box into one pseudo-label 3D box.
pub fn lift_box(scene: &Scene, b: &Box2D, params: &LiftParams) -> std::result::Result<Box3D, LiftRejection> {
    let clamped = clamp_box2d(b, &scene.camera).ok_or(LiftRejection::DegenerateBox2d)?;
    let idx = frustum_points(&scene.cloud, &scene.camera, &clamped);
    if idx.is_empty() {
        return Err(LiftRejection::EmptyFrustum);
    }
    let pts: Vec<[f64; 3]> = idx.iter().map(|&i| scene.cloud.points()[i]).collect();
    let labels = dbscan(&pts, params.eps, params.min_pts);
    if labels.n_clusters == 0 {
        return Err(LiftRejection::AllNoise);
    }

    // depth of every frustum point, for the tie-break
    let depths: Vec<f64> = idx
        .iter()
        .map(|&i| project_point(&scene.camera, scene.cloud.points()[i]).map(|p| p.depth).unwrap_or(0.0))
        .collect();
    let mut sorted = depths.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median_depth = sorted[sorted.len() / 2];

    let mut sizes = vec![0usize; labels.n_clusters];
    let mut depth_sums = vec![0.0f64; labels.n_clusters];
    for (k, lab) in labels.labels.iter().enumerate() {
        if let Some(c) = lab {
            sizes[*c] += 1;
            depth_sums[*c] += depths[k];
        }
    }
    // largest cluster; ties go to the centroid depth nearest the median
    // frustum depth, then to the lowest cluster index
    let mut best = 0usize;
    for c in 1..labels.n_clusters {
        if sizes[c] > sizes[best] {
            best = c;
        } else if sizes[c] == sizes[best] {
            let dc = (depth_sums[c] / sizes[c] as f64 - median_depth).abs();
            let db = (depth_sums[best] / sizes[best] as f64 - median_depth).abs();
            if dc < db {
                best = c;
            }
        }
    }
    if sizes[best] < params.min_cluster {
        return Err(LiftRejection::ClusterTooSmall);
    }
    let cluster_pts: Vec<[f64; 3]> = labels
        .labels
        .iter()
        .zip(pts.iter())
        .filter_map(|(lab, p)| (*lab == Some(best)).then_some(*p))
        .collect();
    fit_box(&cluster_pts, params.fit_mode).map_err(|_| LiftRejection::ClusterTooSmall)
}
