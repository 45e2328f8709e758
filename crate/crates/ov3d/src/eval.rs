//! Detection scoring: per-category AP and AR at configurable IoU
//! thresholds, mAP/mean-AR summaries, and diagnostics.
//!
//! Predictions are ranked by score (ties by scene id then input order)
//! and matched greedily to the highest-IoU unmatched ground-truth box of
//! the same scene and category. AP is the area under the precision
//! envelope (all-point interpolation); AR is the final recall.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::iou3d;
use crate::scene::Box3D;

#[derive(Debug, Clone)]
pub struct LabeledBox3D {
    pub bbox: Box3D,
    pub category: String,
    /// Detection confidence; ground truth carries none.
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryMetrics {
    pub category: String,
    pub threshold: f64,
    pub ap: f64,
    pub ar: f64,
    pub n_gt: usize,
    pub n_pred: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSummary {
    pub threshold: f64,
    pub map: f64,
    pub mean_ar: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct EvalReport {
    pub per_category: Vec<CategoryMetrics>,
    pub summaries: Vec<ThresholdSummary>,
    pub n_gt_total: usize,
    pub n_pred_total: usize,
    /// Prediction categories absent from the ground truth, with counts.
    pub unknown_categories: BTreeMap<String, usize>,
}

impl EvalReport {
    pub fn map_at(&self, threshold: f64) -> Option<f64> {
        self.summaries.iter().find(|s| s.threshold == threshold).map(|s| s.map)
    }

    pub fn category_at(&self, category: &str, threshold: f64) -> Option<&CategoryMetrics> {
        self.per_category
            .iter()
            .find(|m| m.category == category && m.threshold == threshold)
    }
}

/// Area under the precision envelope for a TP/FP sequence in rank order.
fn average_precision(tp_flags: &[bool], n_gt: usize) -> f64 {
    if n_gt == 0 || tp_flags.is_empty() {
        return 0.0;
    }
    let mut tp = 0usize;
    let mut recalls = Vec::with_capacity(tp_flags.len());
    let mut precisions = Vec::with_capacity(tp_flags.len());
    for (rank, &hit) in tp_flags.iter().enumerate() {
        if hit {
            tp += 1;
        }
        recalls.push(tp as f64 / n_gt as f64);
        precisions.push(tp as f64 / (rank + 1) as f64);
    }
    // precision envelope: running max from the right
    for i in (0..precisions.len() - 1).rev() {
        precisions[i] = precisions[i].max(precisions[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (r, p) in recalls.iter().zip(precisions.iter()) {
        ap += (r - prev_recall) * p;
        prev_recall = *r;
    }
    ap
}

/// Score detections against ground truth. Scenes are keyed by id; both
/// maps must use the same ids for corresponding scenes.
pub fn evaluate(
    preds: &BTreeMap<String, Vec<LabeledBox3D>>,
    gts: &BTreeMap<String, Vec<LabeledBox3D>>,
    thresholds: &[f64],
) -> Result<EvalReport> {
    if thresholds.is_empty() || thresholds.iter().any(|t| !(*t > 0.0 && *t <= 1.0)) {
        return Err(Error::InvalidParams(format!("IoU thresholds must be in (0,1]: {thresholds:?}")));
    }

    let categories: BTreeSet<String> = gts
        .values()
        .flatten()
        .map(|g| g.category.clone())
        .collect();

    let mut unknown_categories: BTreeMap<String, usize> = BTreeMap::new();
    for p in preds.values().flatten() {
        if !categories.contains(&p.category) {
            *unknown_categories.entry(p.category.clone()).or_default() += 1;
        }
    }

    let n_gt_total = gts.values().map(|v| v.len()).sum();
    let n_pred_total = preds.values().map(|v| v.len()).sum();

    let mut per_category = Vec::new();
    for threshold in thresholds {
        for category in &categories {
            // rank all predictions of this category across scenes
            let mut ranked: Vec<(&String, usize, &LabeledBox3D)> = Vec::new();
            for (scene_id, boxes) in preds {
                for (order, p) in boxes.iter().enumerate() {
                    if &p.category == category {
                        ranked.push((scene_id, order, p));
                    }
                }
            }
            ranked.sort_by(|a, b| {
                let sa = a.2.score.unwrap_or(1.0);
                let sb = b.2.score.unwrap_or(1.0);
                sb.partial_cmp(&sa)
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then_with(|| a.0.cmp(b.0))
                    .then_with(|| a.1.cmp(&b.1))
            });

            let mut gt_matched: BTreeMap<&String, Vec<bool>> = BTreeMap::new();
            let mut n_gt = 0usize;
            for (scene_id, boxes) in gts {
                let of_cat: Vec<bool> = boxes.iter().map(|_| false).collect();
                n_gt += boxes.iter().filter(|g| &g.category == category).count();
                gt_matched.insert(scene_id, of_cat);
            }

            let mut tp_flags = Vec::with_capacity(ranked.len());
            for (scene_id, _, p) in &ranked {
                let mut best: Option<(usize, f64)> = None;
                if let Some(scene_gts) = gts.get(*scene_id) {
                    let matched = gt_matched.get_mut(scene_id).unwrap();
                    for (gi, g) in scene_gts.iter().enumerate() {
                        if &g.category != category || matched[gi] {
                            continue;
                        }
                        let iou = iou3d(&p.bbox, &g.bbox);
                        if iou >= *threshold && best.map_or(true, |(_, b)| iou > b) {
                            best = Some((gi, iou));
                        }
                    }
                    if let Some((gi, _)) = best {
                        matched[gi] = true;
                    }
                }
                tp_flags.push(best.is_some());
            }

            let ap = average_precision(&tp_flags, n_gt);
            let matched_gt: usize = gt_matched
                .iter()
                .map(|(scene_id, flags)| {
                    let scene_gts = &gts[*scene_id];
                    flags
                        .iter()
                        .enumerate()
                        .filter(|(gi, m)| **m && scene_gts[*gi].category == *category)
                        .count()
                })
                .sum();
            let ar = if n_gt == 0 { 0.0 } else { matched_gt as f64 / n_gt as f64 };
            per_category.push(CategoryMetrics {
                category: category.clone(),
                threshold: *threshold,
                ap,
                ar,
                n_gt,
                n_pred: ranked.len(),
            });
        }
    }

    let summaries = thresholds
        .iter()
        .map(|t| {
            let rows: Vec<&CategoryMetrics> = per_category
                .iter()
                .filter(|m| m.threshold == *t && m.n_gt > 0)
                .collect();
            let n = rows.len().max(1) as f64;
            ThresholdSummary {
                threshold: *t,
                map: rows.iter().map(|m| m.ap).sum::<f64>() / n,
                mean_ar: rows.iter().map(|m| m.ar).sum::<f64>() / n,
            }
        })
        .collect();

    Ok(EvalReport {
        per_category,
        summaries,
        n_gt_total,
        n_pred_total,
        unknown_categories,
    })
}

/// Aligned plain-text table: categories as columns, means last.
pub fn report_table(report: &EvalReport) -> String {
    let mut categories: Vec<&str> = report
        .per_category
        .iter()
        .map(|m| m.category.as_str())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    categories.sort();
    let mut out = String::new();
    let mut header = format!("{:<10}", "metric");
    for c in &categories {
        header.push_str(&format!(" {:>10.10}", c));
    }
    header.push_str(&format!(" {:>10}", "mean"));
    out.push_str(&header);
    out.push('\n');
    for s in &report.summaries {
        for (label, pick, mean) in [
            ("AP", true, s.map),
            ("AR", false, s.mean_ar),
        ] {
            let mut line = format!("{:<10}", format!("{}{:.0}", label, s.threshold * 100.0));
            for c in &categories {
                let m = report.category_at(c, s.threshold);
                let v = m.map(|m| if pick { m.ap } else { m.ar }).unwrap_or(0.0);
                line.push_str(&format!(" {:>10.4}", v));
            }
            line.push_str(&format!(" {:>10.4}", mean));
            out.push_str(&line);
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn boxx(center: [f64; 3]) -> Box3D {
        Box3D::new(center, [1.0; 3], 0.0).unwrap()
    }

    fn labeled(center: [f64; 3], category: &str, score: Option<f64>) -> LabeledBox3D {
        LabeledBox3D { bbox: boxx(center), category: category.into(), score }
    }

    fn one_scene(boxes: Vec<LabeledBox3D>) -> BTreeMap<String, Vec<LabeledBox3D>> {
        BTreeMap::from([("s0".to_string(), boxes)])
    }

    #[test]
    fn perfect_predictions_score_one() {
        let gt = one_scene(vec![labeled([0.0; 3], "chair", None), labeled([5.0, 0.0, 0.0], "table", None)]);
        let pred = one_scene(vec![
            labeled([0.0; 3], "chair", Some(1.0)),
            labeled([5.0, 0.0, 0.0], "table", Some(1.0)),
        ]);
        let r = evaluate(&pred, &gt, &[0.25, 0.5]).unwrap();
        for s in &r.summaries {
            assert_eq!(s.map, 1.0);
            assert_eq!(s.mean_ar, 1.0);
        }
    }

    #[test]
    fn no_predictions_score_zero() {
        let gt = one_scene(vec![labeled([0.0; 3], "chair", None)]);
        let r = evaluate(&BTreeMap::new(), &gt, &[0.25]).unwrap();
        assert_eq!(r.summaries[0].map, 0.0);
        assert_eq!(r.summaries[0].mean_ar, 0.0);
    }

    #[test]
    fn crafted_pr_fixture() {
        // 2 GT; preds ranked 0.9 TP, 0.8 FP, 0.7 TP
        // precision (1, 1/2, 2/3), recall (1/2, 1/2, 1) -> AP = 5/6, AR = 1
        let gt = one_scene(vec![labeled([0.0; 3], "c", None), labeled([5.0, 0.0, 0.0], "c", None)]);
        let pred = one_scene(vec![
            labeled([0.0; 3], "c", Some(0.9)),
            labeled([20.0, 0.0, 0.0], "c", Some(0.8)),
            labeled([5.0, 0.0, 0.0], "c", Some(0.7)),
        ]);
        let r = evaluate(&pred, &gt, &[0.25]).unwrap();
        let m = r.category_at("c", 0.25).unwrap();
        assert!((m.ap - 5.0 / 6.0).abs() < 1e-12, "{}", m.ap);
        assert_eq!(m.ar, 1.0);
    }

    #[test]
    fn duplicated_predictions_do_not_raise_ap() {
        let gt = one_scene(vec![labeled([0.0; 3], "c", None), labeled([5.0, 0.0, 0.0], "c", None)]);
        let pred = vec![
            labeled([0.0; 3], "c", Some(0.9)),
            labeled([20.0, 0.0, 0.0], "c", Some(0.8)),
            labeled([5.0, 0.0, 0.0], "c", Some(0.7)),
        ];
        let base = evaluate(&one_scene(pred.clone()), &gt, &[0.25]).unwrap();
        let mut doubled = pred.clone();
        doubled.extend(pred.iter().map(|p| LabeledBox3D {
            bbox: p.bbox,
            category: p.category.clone(),
            score: p.score.map(|s| s * 0.5),
        }));
        let dup = evaluate(&one_scene(doubled), &gt, &[0.25]).unwrap();
        let (b, d) = (base.category_at("c", 0.25).unwrap(), dup.category_at("c", 0.25).unwrap());
        assert_eq!(b.ar, d.ar);
        assert!(d.ap <= b.ap + 1e-12);
    }

    #[test]
    fn trailing_zero_score_fp_keeps_ap() {
        let gt = one_scene(vec![labeled([0.0; 3], "c", None), labeled([5.0, 0.0, 0.0], "c", None)]);
        let mut pred = vec![
            labeled([0.0; 3], "c", Some(0.9)),
            labeled([20.0, 0.0, 0.0], "c", Some(0.8)),
            labeled([5.0, 0.0, 0.0], "c", Some(0.7)),
        ];
        let base = evaluate(&one_scene(pred.clone()), &gt, &[0.25]).unwrap();
        pred.push(labeled([40.0, 0.0, 0.0], "c", Some(0.0)));
        let with_fp = evaluate(&one_scene(pred), &gt, &[0.25]).unwrap();
        assert_eq!(
            base.category_at("c", 0.25).unwrap().ap,
            with_fp.category_at("c", 0.25).unwrap().ap
        );
    }

    #[test]
    fn unknown_category_reported() {
        let gt = one_scene(vec![labeled([0.0; 3], "chair", None)]);
        let pred = one_scene(vec![
            labeled([0.0; 3], "chair", Some(0.9)),
            labeled([0.0; 3], "dragon", Some(0.8)),
        ]);
        let r = evaluate(&pred, &gt, &[0.25]).unwrap();
        assert_eq!(r.unknown_categories.get("dragon"), Some(&1));
        assert_eq!(r.summaries[0].map, 1.0);
    }

    #[test]
    fn scene_order_invariant() {
        let mk_gt = |ids: &[&str]| -> BTreeMap<String, Vec<LabeledBox3D>> {
            ids.iter()
                .enumerate()
                .map(|(i, id)| (id.to_string(), vec![labeled([i as f64 * 5.0, 0.0, 0.0], "c", None)]))
                .collect()
        };
        let mk_pred = |ids: &[&str]| -> BTreeMap<String, Vec<LabeledBox3D>> {
            ids.iter()
                .enumerate()
                .map(|(i, id)| {
                    (id.to_string(), vec![labeled([i as f64 * 5.0 + 0.1, 0.0, 0.0], "c", Some(0.9 - 0.1 * i as f64))])
                })
                .collect()
        };
        // BTreeMap sorts keys, so insertion order cannot matter; check both spellings anyway
        let a = evaluate(&mk_pred(&["s0", "s1", "s2"]), &mk_gt(&["s0", "s1", "s2"]), &[0.25]).unwrap();
        let b = evaluate(&mk_pred(&["s2", "s1", "s0"]), &mk_gt(&["s2", "s1", "s0"]), &[0.25]).unwrap();
        assert_eq!(a.summaries, b.summaries);
    }

    #[test]
    fn bad_thresholds_rejected() {
        assert!(evaluate(&BTreeMap::new(), &BTreeMap::new(), &[]).is_err());
        assert!(evaluate(&BTreeMap::new(), &BTreeMap::new(), &[0.0]).is_err());
        assert!(evaluate(&BTreeMap::new(), &BTreeMap::new(), &[1.5]).is_err());
    }

    #[test]
    fn table_has_mean_column_last() {
        let gt = one_scene(vec![labeled([0.0; 3], "chair", None)]);
        let pred = one_scene(vec![labeled([0.0; 3], "chair", Some(1.0))]);
        let r = evaluate(&pred, &gt, &[0.25, 0.5]).unwrap();
        let table = report_table(&r);
        let first = table.lines().next().unwrap();
        assert!(first.trim_end().ends_with("mean"));
        assert!(table.contains("AP25"));
        assert!(table.contains("AR50"));
    }
}
