//! Oriented 3D box math: corners, BEV footprints, polygon clipping, exact IoU.
//!
//! IoU decomposes into BEV polygon intersection (Sutherland-Hodgman clipping
//! of the two convex footprints) times vertical overlap. Exact up to
//! floating point, which matters because evaluation thresholds sit near
//! decision boundaries.

use crate::scene::Box3D;

/// Footprint area below this contributes zero intersection; clipping
/// near-degenerate polygons is numerically unstable.
const MIN_FOOTPRINT_AREA: f64 = 1e-10;

/// Convex CCW polygon in the xy plane.
#[derive(Debug, Clone, PartialEq)]
pub struct BevPolygon {
    vertices: Vec<[f64; 2]>,
}

impl BevPolygon {
    /// Caller guarantees convexity and CCW order.
    pub fn new_unchecked(vertices: Vec<[f64; 2]>) -> Self {
        BevPolygon { vertices }
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    /// Shoelace area; non-negative for CCW input.
    pub fn area(&self) -> f64 {
        let v = &self.vertices;
        if v.len() < 3 {
            return 0.0;
        }
        let mut acc = 0.0;
        for i in 0..v.len() {
            let j = (i + 1) % v.len();
            acc += v[i][0] * v[j][1] - v[j][0] * v[i][1];
        }
        0.5 * acc
    }
}

/// The 8 corners of a yaw-rotated box. Vertical faces stay parallel to z;
/// the bottom face comes first, both in CCW footprint order.
pub fn box_corners(b: &Box3D) -> [[f64; 3]; 8] {
    let [cx, cy, cz] = b.center();
    let [l, w, h] = b.size();
    let (s, c) = b.yaw().sin_cos();
    let (hl, hw, hh) = (l / 2.0, w / 2.0, h / 2.0);
    // CCW in local frame
    let local = [[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]];
    let mut out = [[0.0; 3]; 8];
    for (i, [lx, ly]) in local.iter().enumerate() {
        let x = cx + c * lx - s * ly;
        let y = cy + s * lx + c * ly;
        out[i] = [x, y, cz - hh];
        out[i + 4] = [x, y, cz + hh];
    }
    out
}

/// CCW BEV footprint of a box.
pub fn bev_footprint(b: &Box3D) -> BevPolygon {
    let corners = box_corners(b);
    BevPolygon::new_unchecked(corners[..4].iter().map(|c| [c[0], c[1]]).collect())
}

/// Clip a convex CCW subject polygon against a convex CCW clip polygon
/// (Sutherland-Hodgman). Result is convex and CCW.
pub fn clip_convex(subject: &BevPolygon, clip: &BevPolygon) -> BevPolygon {
    let clip_v = clip.vertices();
    let mut current: Vec<[f64; 2]> = subject.vertices().to_vec();
    for i in 0..clip_v.len() {
        if current.is_empty() {
            break;
        }
        let a = clip_v[i];
        let b = clip_v[(i + 1) % clip_v.len()];
        let inside = |p: [f64; 2]| (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]) >= 0.0;
        let intersect = |p: [f64; 2], q: [f64; 2]| -> [f64; 2] {
            let d1 = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
            let d2 = (b[0] - a[0]) * (q[1] - a[1]) - (b[1] - a[1]) * (q[0] - a[0]);
            let t = d1 / (d1 - d2);
            [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]
        };
        let mut next = Vec::with_capacity(current.len() + 4);
        for j in 0..current.len() {
            let p = current[j];
            let q = current[(j + 1) % current.len()];
            match (inside(p), inside(q)) {
                (true, true) => next.push(q),
                (true, false) => next.push(intersect(p, q)),
                (false, true) => {
                    next.push(intersect(p, q));
                    next.push(q);
                }
                (false, false) => {}
            }
        }
        current = next;
    }
    BevPolygon::new_unchecked(current)
}

/// Exact oriented 3D IoU, clamped to [0, 1].
pub fn iou3d(a: &Box3D, b: &Box3D) -> f64 {
    // Clipping a footprint against itself can shave a few ulps off the
    // area; identical boxes must score exactly 1.
    if a == b {
        return 1.0;
    }
    let fa = bev_footprint(a);
    let fb = bev_footprint(b);
    if fa.area() < MIN_FOOTPRINT_AREA || fb.area() < MIN_FOOTPRINT_AREA {
        return 0.0;
    }
    let bev_inter = clip_convex(&fa, &fb).area().max(0.0);
    if bev_inter <= 0.0 {
        return 0.0;
    }
    let (az1, az2) = (a.center()[2] - a.size()[2] / 2.0, a.center()[2] + a.size()[2] / 2.0);
    let (bz1, bz2) = (b.center()[2] - b.size()[2] / 2.0, b.center()[2] + b.size()[2] / 2.0);
    let z_overlap = (az2.min(bz2) - az1.max(bz1)).max(0.0);
    let inter = bev_inter * z_overlap;
    let union = a.volume() + b.volume() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}
