//! Training objective: bipartite box matching, localization loss,
//! cross-modal contrastive loss with analytic gradients, and their sum.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::iou3d;
use crate::scene::{wrap_angle, Box3D};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    #[serde(rename = "pc")]
    PointCloud,
    Image,
    Text,
}

/// A unit-direction feature vector tagged with modality and category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVec {
    pub id: String,
    pub modality: Modality,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    pub values: Vec<f64>,
}

impl FeatureVec {
    pub fn new(id: impl Into<String>, modality: Modality, values: Vec<f64>) -> Result<Self> {
        let id = id.into();
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::BadVector { id, index });
        }
        Ok(FeatureVec { id, modality, category: None, values })
    }

    pub fn with_category(mut self, category: impl Into<String>) -> Self {
        self.category = Some(category.into());
        self
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// For each anchor in the first batch, the indices of its positives in
/// the second batch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PositiveMap {
    positives: Vec<Vec<usize>>,
}

impl PositiveMap {
    pub fn new(positives: Vec<Vec<usize>>, second_batch_len: usize) -> Result<Self> {
        for (b, set) in positives.iter().enumerate() {
            if set.is_empty() {
                return Err(Error::EmptyPositives(b));
            }
            for &j in set {
                if j >= second_batch_len {
                    return Err(Error::PositiveOutOfRange { index: j, len: second_batch_len });
                }
            }
        }
        Ok(PositiveMap { positives })
    }

    /// Positives by matching category between the two batches.
    pub fn from_categories(anchors: &[FeatureVec], others: &[FeatureVec]) -> Result<Self> {
        let positives = anchors
            .iter()
            .map(|a| {
                others
                    .iter()
                    .enumerate()
                    .filter_map(|(j, o)| (o.category == a.category && a.category.is_some()).then_some(j))
                    .collect::<Vec<_>>()
            })
            .collect();
        PositiveMap::new(positives, others.len())
    }

    pub fn sets(&self) -> &[Vec<usize>] {
        &self.positives
    }

    pub fn len(&self) -> usize {
        self.positives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positives.is_empty()
    }
}

/// One-to-one matching of predictions to targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// (prediction index, target index) pairs, sorted by prediction index.
    pub pairs: Vec<(usize, usize)>,
    pub total_cost: f64,
}

/// Minimum-cost assignment for a rectangular cost matrix
/// (Jonker-Volgenant style shortest augmenting paths with potentials).
/// Matches min(P, T) pairs.
pub fn hungarian_match(cost: &[Vec<f64>]) -> Assignment {
    let rows = cost.len();
    let cols = if rows == 0 { 0 } else { cost[0].len() };
    if rows == 0 || cols == 0 {
        return Assignment { pairs: Vec::new(), total_cost: 0.0 };
    }
    let transpose = rows > cols;
    let (n, m, at): (usize, usize, Box<dyn Fn(usize, usize) -> f64>) = if transpose {
        (cols, rows, Box::new(|i, j| cost[j][i]))
    } else {
        (rows, cols, Box::new(|i, j| cost[i][j]))
    };

    // potentials over rows (u) and columns (v); way[j] remembers the
    // augmenting path; 0 is a virtual column
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    let mut assigned_row = vec![usize::MAX; m + 1]; // row matched to column j
    let mut way = vec![0usize; m + 1];

    for i in 0..n {
        assigned_row[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = assigned_row[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = at(i0, j - 1) - u[i0 + 1] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[assigned_row[j] + 1] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if assigned_row[j0] == usize::MAX {
                break;
            }
        }
        // augment along the path
        while j0 != 0 {
            let j1 = way[j0];
            assigned_row[j0] = assigned_row[j1];
            j0 = j1;
        }
    }

    let mut pairs = Vec::with_capacity(n);
    let mut total_cost = 0.0;
    for j in 1..=m {
        let i = assigned_row[j];
        if i != usize::MAX {
            let (p, t) = if transpose { (j - 1, i) } else { (i, j - 1) };
            total_cost += cost[p][t];
            pairs.push((p, t));
        }
    }
    pairs.sort_unstable();
    Assignment { pairs, total_cost }
}

pub const DEFAULT_LAMBDA_CENTER: f64 = 1.0;
pub const DEFAULT_LAMBDA_IOU: f64 = 2.0;

/// Matching cost between a predicted and a target box.
pub fn box_cost(pred: &Box3D, tgt: &Box3D, lambda_center: f64, lambda_iou: f64) -> f64 {
    let dc: f64 = pred
        .center()
        .iter()
        .zip(tgt.center().iter())
        .map(|(a, b)| (a - b).abs())
        .sum();
    lambda_center * dc + lambda_iou * (1.0 - iou3d(pred, tgt))
}

/// Per-pair regression term: L1 on center and size, wrapped L1 on yaw.
pub fn box_regression(pred: &Box3D, tgt: &Box3D) -> f64 {
    let l1 = |a: [f64; 3], b: [f64; 3]| -> f64 {
        a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).sum()
    };
    l1(pred.center(), tgt.center()) + l1(pred.size(), tgt.size()) + wrap_angle(pred.yaw() - tgt.yaw()).abs()
}

/// Hungarian-matched localization loss. A literal sum over matched pairs;
/// set `mean_normalize` to divide by the number of matches instead.
pub fn loc_loss(preds: &[Box3D], targets: &[Box3D], mean_normalize: bool) -> (f64, Assignment) {
    if preds.is_empty() || targets.is_empty() {
        return (0.0, Assignment { pairs: Vec::new(), total_cost: 0.0 });
    }
    let cost: Vec<Vec<f64>> = preds
        .iter()
        .map(|p| targets.iter().map(|t| box_cost(p, t, DEFAULT_LAMBDA_CENTER, DEFAULT_LAMBDA_IOU)).collect())
        .collect();
    let assignment = hungarian_match(&cost);
    let mut loss: f64 = assignment
        .pairs
        .iter()
        .map(|&(p, t)| box_regression(&preds[p], &targets[t]))
        .sum();
    if mean_normalize && !assignment.pairs.is_empty() {
        loss /= assignment.pairs.len() as f64;
    }
    (loss, assignment)
}

/// CLIP-convention temperature default.
pub const DEFAULT_TAU: f64 = 0.07;

fn normalize(v: &[f64]) -> (Vec<f64>, f64) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm < 1e-12 {
        (v.to_vec(), norm)
    } else {
        (v.iter().map(|x| x / norm).collect(), norm)
    }
}

/// InfoNCE-style contrastive loss over a batch of anchors against a second
/// batch, with the denominator summed over the full second batch.
///
/// Both sides are L2-normalized internally. Returns the scalar loss and
/// the analytic gradient with respect to the *raw* anchor vectors (the
/// second batch is treated as frozen).
pub fn contrastive_loss(
    anchors: &[FeatureVec],
    others: &[FeatureVec],
    positives: &PositiveMap,
    tau: f64,
) -> Result<(f64, Vec<Vec<f64>>)> {
    if tau <= 0.0 || !tau.is_finite() {
        return Err(Error::BadTemperature(tau));
    }
    let batch = anchors.len();
    if batch == 0 || positives.len() != batch {
        return Err(Error::InvalidParams(format!(
            "positive map covers {} anchors, batch has {}",
            positives.len(),
            batch
        )));
    }
    let dim = anchors[0].dim();
    for f in anchors.iter().chain(others.iter()) {
        if f.dim() != dim {
            return Err(Error::DimensionMismatch { id: f.id.clone(), expected: dim, got: f.dim() });
        }
    }
    for set in positives.sets() {
        for &j in set {
            if j >= others.len() {
                return Err(Error::PositiveOutOfRange { index: j, len: others.len() });
            }
        }
    }

    let normed_others: Vec<Vec<f64>> = others.iter().map(|f| normalize(&f.values).0).collect();

    let mut loss = 0.0;
    let mut grads = vec![vec![0.0; dim]; batch];
    for (b, anchor) in anchors.iter().enumerate() {
        let (ub, norm_b) = normalize(&anchor.values);
        let sims: Vec<f64> = normed_others
            .iter()
            .map(|v| ub.iter().zip(v.iter()).map(|(x, y)| x * y).sum::<f64>() / tau)
            .collect();
        let max_s = sims.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = sims.iter().map(|s| (s - max_s).exp()).collect();
        let denom: f64 = exps.iter().sum();
        let pos_set = &positives.sets()[b];
        let numer: f64 = pos_set.iter().map(|&j| exps[j]).sum();
        // positives are a subset of the denominator, so the log ratio is <= 0
        debug_assert!(numer <= denom * (1.0 + 1e-12));
        loss += -(numer / denom).ln();

        // dL_b/du_b = -(1/tau) (sum_j p+_j v_j - sum_k q_k v_k)
        let mut du = vec![0.0; dim];
        for &j in pos_set {
            let w = exps[j] / numer;
            for d in 0..dim {
                du[d] -= w * normed_others[j][d];
            }
        }
        for (k, v) in normed_others.iter().enumerate() {
            let w = exps[k] / denom;
            for d in 0..dim {
                du[d] += w * v[d];
            }
        }
        let scale = 1.0 / (tau * batch as f64);
        // chain through u = x / |x|: (I - u u^T) / |x|
        let dot: f64 = du.iter().zip(ub.iter()).map(|(a, c)| a * c).sum();
        for d in 0..dim {
            grads[b][d] = scale * (du[d] - dot * ub[d]) / norm_b.max(1e-12);
        }
    }
    Ok((loss / batch as f64, grads))
}

/// Eq.-style recognition loss: contrastive alignment of point-cloud
/// features to 2D image features plus to text features.
pub fn recog_loss(
    f_pc: &[FeatureVec],
    f_2d: &[FeatureVec],
    f_t: &[FeatureVec],
    pos_2d: &PositiveMap,
    pos_t: &PositiveMap,
    tau: f64,
) -> Result<f64> {
    let (l_2d, _) = contrastive_loss(f_pc, f_2d, pos_2d, tau)?;
    let (l_t, _) = contrastive_loss(f_pc, f_t, pos_t, tau)?;
    Ok(l_2d + l_t)
}

pub fn total_loss(l_loc: f64, l_recog: f64) -> f64 {
    l_loc + l_recog
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::Box3D;

    fn unit(dim: usize, axis: usize) -> Vec<f64> {
        let mut v = vec![0.0; dim];
        v[axis] = 1.0;
        v
    }

    fn feat(id: &str, values: Vec<f64>) -> FeatureVec {
        FeatureVec::new(id, Modality::PointCloud, values).unwrap()
    }

    #[test]
    fn hungarian_diagonal() {
        let a = hungarian_match(&[vec![1.0, 2.0], vec![2.0, 1.0]]);
        assert_eq!(a.pairs, vec![(0, 0), (1, 1)]);
        assert_eq!(a.total_cost, 2.0);
    }

    #[test]
    fn hungarian_single_row() {
        let a = hungarian_match(&[vec![5.0, 1.0, 9.0]]);
        assert_eq!(a.pairs, vec![(0, 1)]);
        assert_eq!(a.total_cost, 1.0);
    }

    #[test]
    fn hungarian_tall_matrix() {
        // 3 preds, 2 targets: only 2 matches
        let a = hungarian_match(&[vec![8.0, 7.0], vec![1.0, 9.0], vec![4.0, 2.0]]);
        assert_eq!(a.pairs.len(), 2);
        assert_eq!(a.total_cost, 3.0);
        assert_eq!(a.pairs, vec![(1, 0), (2, 1)]);
    }

    #[test]
    fn hungarian_empty() {
        let a = hungarian_match(&[]);
        assert!(a.pairs.is_empty());
        assert_eq!(a.total_cost, 0.0);
    }

    #[test]
    fn hungarian_beats_random_assignments() {
        let mut rng = crate::rng::Rng::new(31);
        for _ in 0..20 {
            let n = 2 + rng.range_usize(5);
            let cost: Vec<Vec<f64>> =
                (0..n).map(|_| (0..n).map(|_| rng.range_f64(0.0, 10.0)).collect()).collect();
            let best = hungarian_match(&cost).total_cost;
            for _ in 0..50 {
                let mut perm: Vec<usize> = (0..n).collect();
                for i in (1..n).rev() {
                    perm.swap(i, rng.range_usize(i + 1));
                }
                let c: f64 = perm.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
                assert!(best <= c + 1e-9);
            }
        }
    }

    #[test]
    fn box_cost_examples() {
        let a = Box3D::new([0.0; 3], [1.0; 3], 0.0).unwrap();
        assert_eq!(box_cost(&a, &a, 1.0, 2.0), 0.0);

        let b = Box3D::new([0.5, 0.0, 0.0], [1.0; 3], 0.0).unwrap();
        let c = box_cost(&a, &b, 1.0, 2.0);
        assert!((c - (0.5 + 2.0 * (1.0 - 1.0 / 3.0))).abs() < 1e-12, "{c}");

        let d = Box3D::new([2.0, 0.0, 0.0], [1.0; 3], 0.0).unwrap();
        assert!((box_cost(&a, &d, 1.0, 2.0) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn loc_loss_perfect_prediction_is_zero() {
        let t = vec![
            Box3D::new([0.0; 3], [1.0; 3], 0.2).unwrap(),
            Box3D::new([3.0, 0.0, 0.0], [2.0, 1.0, 1.0], -0.4).unwrap(),
        ];
        let mut p = t.clone();
        p.reverse();
        let (l, a) = loc_loss(&p, &t, false);
        assert_eq!(l, 0.0);
        assert_eq!(a.pairs.len(), 2);
    }

    #[test]
    fn loc_loss_single_center_offset() {
        let t = vec![Box3D::new([0.0, 0.0, 0.0], [1.0; 3], 0.0).unwrap()];
        let p = vec![Box3D::new([0.0, 0.0, 0.3], [1.0; 3], 0.0).unwrap()];
        let (l, _) = loc_loss(&p, &t, false);
        assert!((l - 0.3).abs() < 1e-12);
    }

    #[test]
    fn loc_loss_rectangular_matches_hand_evaluation() {
        // 3 preds vs 2 targets, clearly separated so the matching is obvious
        let t0 = Box3D::new([0.0, 0.0, 0.0], [1.0; 3], 0.0).unwrap();
        let t1 = Box3D::new([5.0, 0.0, 0.0], [1.0; 3], 0.0).unwrap();
        let p0 = Box3D::new([0.1, 0.0, 0.0], [1.0; 3], 0.0).unwrap(); // near t0
        let p1 = Box3D::new([5.0, 0.2, 0.0], [1.2, 1.0, 1.0], 0.0).unwrap(); // near t1
        let p2 = Box3D::new([20.0, 0.0, 0.0], [1.0; 3], 0.0).unwrap(); // unmatched
        let (l, a) = loc_loss(&[p0, p1, p2], &[t0, t1], false);
        assert_eq!(a.pairs, vec![(0, 0), (1, 1)]);
        // pair (0,0): |0.1| ; pair (1,1): 0.2 + 0.2
        assert!((l - (0.1 + 0.4)).abs() < 1e-12, "{l}");
    }

    #[test]
    fn loc_loss_empty_sides() {
        let t = vec![Box3D::new([0.0; 3], [1.0; 3], 0.0).unwrap()];
        assert_eq!(loc_loss(&[], &t, false).0, 0.0);
        assert_eq!(loc_loss(&t, &[], false).0, 0.0);
    }

    #[test]
    fn contrastive_singleton_is_zero() {
        let f1 = vec![feat("a", unit(4, 0))];
        let f2 = vec![feat("b", unit(4, 0))];
        let pos = PositiveMap::new(vec![vec![0]], 1).unwrap();
        let (l, _) = contrastive_loss(&f1, &f2, &pos, 1.0).unwrap();
        assert!(l.abs() < 1e-15);
    }

    #[test]
    fn contrastive_orthonormal_closed_form() {
        // L = -log(e / (e + 1)) = log(1 + 1/e)
        let f1 = vec![feat("a", unit(4, 0)), feat("b", unit(4, 1))];
        let f2 = vec![feat("c", unit(4, 0)), feat("d", unit(4, 1))];
        let pos = PositiveMap::new(vec![vec![0], vec![1]], 2).unwrap();
        let (l, _) = contrastive_loss(&f1, &f2, &pos, 1.0).unwrap();
        let expected = (1.0 + (-1.0f64).exp()).ln();
        assert!((l - expected).abs() < 1e-12, "{l} vs {expected}");
    }

    #[test]
    fn contrastive_scale_invariant_in_raw_features() {
        let mut rng = crate::rng::Rng::new(41);
        let dim = 6;
        let mk = |rng: &mut crate::rng::Rng| -> Vec<f64> {
            (0..dim).map(|_| rng.range_f64(-1.0, 1.0)).collect()
        };
        let f1: Vec<_> = (0..3).map(|i| feat(&format!("a{i}"), mk(&mut rng))).collect();
        let f2: Vec<_> = (0..4).map(|i| feat(&format!("b{i}"), mk(&mut rng))).collect();
        let pos = PositiveMap::new(vec![vec![0], vec![1, 2], vec![3]], 4).unwrap();
        let (l, _) = contrastive_loss(&f1, &f2, &pos, 0.07).unwrap();
        let scaled: Vec<_> = f1
            .iter()
            .map(|f| feat(&f.id, f.values.iter().map(|v| v * 7.3).collect()))
            .collect();
        let (l2, _) = contrastive_loss(&scaled, &f2, &pos, 0.07).unwrap();
        assert!((l - l2).abs() < 1e-10);
    }

    #[test]
    fn contrastive_invariant_to_positive_preserving_permutation() {
        let f1 = vec![feat("a", vec![0.6, 0.8, 0.0]), feat("b", vec![0.0, 0.6, 0.8])];
        let f2 = vec![
            feat("p", vec![1.0, 0.0, 0.0]),
            feat("q", vec![0.0, 1.0, 0.0]),
            feat("r", vec![0.0, 0.0, 1.0]),
        ];
        let pos = PositiveMap::new(vec![vec![0], vec![2]], 3).unwrap();
        let (l, _) = contrastive_loss(&f1, &f2, &pos, 0.5).unwrap();
        // permute f2 as [r, p, q]
        let f2p = vec![f2[2].clone(), f2[0].clone(), f2[1].clone()];
        let posp = PositiveMap::new(vec![vec![1], vec![0]], 3).unwrap();
        let (lp, _) = contrastive_loss(&f1, &f2p, &posp, 0.5).unwrap();
        assert!((l - lp).abs() < 1e-12);
    }

    #[test]
    fn contrastive_rejects_bad_inputs() {
        let f1 = vec![feat("a", unit(3, 0))];
        let f2 = vec![feat("b", unit(3, 1))];
        assert!(PositiveMap::new(vec![vec![]], 1).is_err());
        assert!(PositiveMap::new(vec![vec![5]], 1).is_err());
        let pos = PositiveMap::new(vec![vec![0]], 1).unwrap();
        assert!(matches!(
            contrastive_loss(&f1, &f2, &pos, 0.0),
            Err(Error::BadTemperature(_))
        ));
        let bad_dim = vec![feat("c", unit(4, 0))];
        assert!(contrastive_loss(&f1, &bad_dim, &pos, 1.0).is_err());
    }

    #[test]
    fn recog_loss_is_sum_of_terms() {
        let mut rng = crate::rng::Rng::new(51);
        let dim = 5;
        let mk = |rng: &mut crate::rng::Rng, tag: &str, n: usize| -> Vec<FeatureVec> {
            (0..n)
                .map(|i| {
                    feat(
                        &format!("{tag}{i}"),
                        (0..dim).map(|_| rng.range_f64(-1.0, 1.0)).collect(),
                    )
                })
                .collect()
        };
        let f_pc = mk(&mut rng, "pc", 3);
        let f_2d = mk(&mut rng, "im", 4);
        let f_t = mk(&mut rng, "tx", 3);
        let pos_2d = PositiveMap::new(vec![vec![0], vec![1], vec![2, 3]], 4).unwrap();
        let pos_t = PositiveMap::new(vec![vec![0], vec![1], vec![2]], 3).unwrap();
        let total = recog_loss(&f_pc, &f_2d, &f_t, &pos_2d, &pos_t, 0.07).unwrap();
        let a = contrastive_loss(&f_pc, &f_2d, &pos_2d, 0.07).unwrap().0;
        let b = contrastive_loss(&f_pc, &f_t, &pos_t, 0.07).unwrap().0;
        assert_eq!(total, a + b);
    }

    #[test]
    fn recog_loss_orthonormal_doubles() {
        let f1 = vec![feat("a", unit(4, 0)), feat("b", unit(4, 1))];
        let f2 = vec![feat("c", unit(4, 0)), feat("d", unit(4, 1))];
        let pos = PositiveMap::new(vec![vec![0], vec![1]], 2).unwrap();
        let l = recog_loss(&f1, &f2, &f2, &pos, &pos, 1.0).unwrap();
        assert!((l - 2.0 * (1.0 + (-1.0f64).exp()).ln()).abs() < 1e-12);
    }

    #[test]
    fn total_loss_sums() {
        assert_eq!(total_loss(0.0, 0.0), 0.0);
        assert_eq!(total_loss(1.5, 2.25), 3.75);
    }
}
