//! Detection scoring.
//!
//! Matching is greedy in descending confidence: each detection takes the
//! unmatched same-class ground-truth box in its image with the highest IoU,
//! provided that IoU reaches the threshold. Equal confidences are ordered by
//! `(image_id, x, y, w, h, class_id)` so results never depend on input order.
//!
//! The precision-recall curve has one point per distinct confidence value
//! (all detections at or above it are kept). AP is the exact area under its
//! monotone envelope: precision at each point is replaced by the maximum
//! precision at any higher recall, and the envelope is integrated over every
//! recall step.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::groundtruth::{Annotation, BBox};

pub const AP_IOU: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("no ground-truth boxes; recall is undefined")]
    NoGroundTruth,
    #[error("area must be positive, got {0} km^2")]
    BadArea(f64),
    #[error("no reports to aggregate")]
    NoReports,
    #[error("reports disagree on {0}")]
    Mismatch(&'static str),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub image_id: String,
    pub class_id: u32,
    pub bbox: BBox,
    /// In `[0, 1]`.
    pub confidence: f64,
}

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection(b).map_or(0, |i| i.area());
    if inter == 0 {
        return 0.0;
    }
    inter as f64 / (a.area() + b.area() - inter) as f64
}

fn det_order(a: &Detection, b: &Detection) -> Ordering {
    b.confidence
        .total_cmp(&a.confidence)
        .then_with(|| a.image_id.cmp(&b.image_id))
        .then_with(|| (a.bbox.x, a.bbox.y, a.bbox.w, a.bbox.h).cmp(&(b.bbox.x, b.bbox.y, b.bbox.w, b.bbox.h)))
        .then_with(|| a.class_id.cmp(&b.class_id))
}

/// Indices of `dets` in processing order.
fn processing_order(dets: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&i, &j| det_order(&dets[i], &dets[j]));
    order
}

/// True-positive flag for each detection, aligned with `dets`.
pub fn match_detections(dets: &[Detection], gts: &[Annotation], iou_min: f64) -> Vec<bool> {
    let mut pools: BTreeMap<(&str, u32), Vec<(BBox, bool)>> = BTreeMap::new();
    for g in gts {
        pools
            .entry((g.image_id.as_str(), g.class_id))
            .or_default()
            .push((g.bbox, false));
    }
    for pool in pools.values_mut() {
        pool.sort_by_key(|(b, _)| (b.x, b.y, b.w, b.h));
    }

    let mut flags = vec![false; dets.len()];
    for i in processing_order(dets) {
        let d = &dets[i];
        let Some(pool) = pools.get_mut(&(d.image_id.as_str(), d.class_id)) else {
            continue;
        };
        let mut best: Option<(usize, f64)> = None;
        for (k, (g, used)) in pool.iter().enumerate() {
            if *used {
                continue;
            }
            let v = iou(&d.bbox, g);
            if best.map_or(true, |(_, bv)| v > bv) {
                best = Some((k, v));
            }
        }
        if let Some((k, v)) = best {
            if v >= iou_min {
                pool[k].1 = true;
                flags[i] = true;
            }
        }
    }
    flags
}

/// Cumulative counts at one confidence threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub threshold: f64,
    pub tp: usize,
    pub fp: usize,
}

/// One point per distinct confidence, highest threshold first.
pub fn threshold_curve(dets: &[Detection], gts: &[Annotation], iou_min: f64) -> Vec<CurvePoint> {
    let flags = match_detections(dets, gts, iou_min);
    let order = processing_order(dets);
    let mut points: Vec<CurvePoint> = Vec::new();
    let (mut tp, mut fp) = (0, 0);
    for (pos, &i) in order.iter().enumerate() {
        if flags[i] {
            tp += 1;
        } else {
            fp += 1;
        }
        let c = dets[i].confidence;
        let group_ends = order.get(pos + 1).map_or(true, |&next| dets[next].confidence != c);
        if group_ends {
            points.push(CurvePoint { threshold: c, tp, fp });
        }
    }
    points
}

/// Area under the envelope of the precision-recall curve at IoU 0.5.
pub fn ap50(dets: &[Detection], gts: &[Annotation]) -> Result<f64, MetricsError> {
    average_precision(dets, gts, AP_IOU)
}

pub fn average_precision(dets: &[Detection], gts: &[Annotation], iou_min: f64) -> Result<f64, MetricsError> {
    if gts.is_empty() {
        return Err(MetricsError::NoGroundTruth);
    }
    let n_gt = gts.len() as f64;
    let curve = threshold_curve(dets, gts, iou_min);
    let precision: Vec<f64> = curve.iter().map(|p| p.tp as f64 / (p.tp + p.fp) as f64).collect();
    let mut envelope = precision.clone();
    for k in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[k] = envelope[k].max(envelope[k + 1]);
    }
    let mut ap = 0.0;
    let mut prev_tp = 0;
    for (p, env) in curve.iter().zip(&envelope) {
        if p.tp > prev_tp {
            ap += (p.tp - prev_tp) as f64 / n_gt * env;
            prev_tp = p.tp;
        }
    }
    Ok(ap)
}

/// Recall at a false-alarm budget, with the threshold that achieves it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    /// False alarms per square kilometer allowed.
    pub alpha: f64,
    pub recall: f64,
    /// Lowest confidence kept; `None` when no threshold fits the budget.
    pub threshold: Option<f64>,
    pub tp: f64,
    pub fp: f64,
}

pub fn operating_point(
    dets: &[Detection],
    gts: &[Annotation],
    area_km2: f64,
    alpha: f64,
) -> Result<OperatingPoint, MetricsError> {
    if gts.is_empty() {
        return Err(MetricsError::NoGroundTruth);
    }
    if !(area_km2 > 0.0 && area_km2.is_finite()) {
        return Err(MetricsError::BadArea(area_km2));
    }
    let mut best = OperatingPoint {
        alpha,
        recall: 0.0,
        threshold: None,
        tp: 0.0,
        fp: 0.0,
    };
    for p in threshold_curve(dets, gts, AP_IOU) {
        let recall = p.tp as f64 / gts.len() as f64;
        if p.fp as f64 / area_km2 <= alpha && (best.threshold.is_none() || recall > best.recall) {
            best = OperatingPoint {
                alpha,
                recall,
                threshold: Some(p.threshold),
                tp: p.tp as f64,
                fp: p.fp as f64,
            };
        }
    }
    Ok(best)
}

/// `R(alpha)`: best recall with at most `alpha` false alarms per km^2.
pub fn recall_at_fa(dets: &[Detection], gts: &[Annotation], area_km2: f64, alpha: f64) -> Result<f64, MetricsError> {
    operating_point(dets, gts, area_km2, alpha).map(|p| p.recall)
}

/// Share of a square kilometer covered by `alpha` detections of
/// `width_px` x `height_px` pixels at `gsd` meters per pixel.
pub fn inspection_fraction(width_px: f64, height_px: f64, gsd: f64, alpha: f64) -> f64 {
    alpha * width_px * gsd * height_px * gsd / 1e6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub ap50: f64,
    /// Sorted by `alpha`.
    pub recall_at: Vec<OperatingPoint>,
    pub num_gt: usize,
    pub num_detections: f64,
    pub area_km2: f64,
    /// Number of runs averaged into this report.
    pub runs: usize,
}

impl EvalReport {
    pub fn recall(&self, alpha: f64) -> Option<f64> {
        self.recall_at.iter().find(|p| p.alpha == alpha).map(|p| p.recall)
    }
}

pub fn evaluate(
    dets: &[Detection],
    gts: &[Annotation],
    area_km2: f64,
    alphas: &[f64],
) -> Result<EvalReport, MetricsError> {
    let ap50 = ap50(dets, gts)?;
    let mut alphas = alphas.to_vec();
    alphas.sort_by(f64::total_cmp);
    alphas.dedup();
    let recall_at = alphas
        .iter()
        .map(|&a| operating_point(dets, gts, area_km2, a))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EvalReport {
        ap50,
        recall_at,
        num_gt: gts.len(),
        num_detections: dets.len() as f64,
        area_km2,
        runs: 1,
    })
}

/// Mean of several runs over the same ground truth and area.
pub fn aggregate_runs(reports: &[EvalReport]) -> Result<EvalReport, MetricsError> {
    let first = reports.first().ok_or(MetricsError::NoReports)?;
    for r in &reports[1..] {
        if r.area_km2 != first.area_km2 {
            return Err(MetricsError::Mismatch("area_km2"));
        }
        if r.num_gt != first.num_gt {
            return Err(MetricsError::Mismatch("ground truth"));
        }
        let same_alphas = r.recall_at.len() == first.recall_at.len()
            && r.recall_at
                .iter()
                .zip(&first.recall_at)
                .all(|(a, b)| a.alpha == b.alpha);
        if !same_alphas {
            return Err(MetricsError::Mismatch("alpha set"));
        }
    }
    let n = reports.len() as f64;
    let mean = |f: &dyn Fn(&EvalReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    let recall_at = first
        .recall_at
        .iter()
        .enumerate()
        .map(|(k, p)| OperatingPoint {
            alpha: p.alpha,
            recall: mean(&|r| r.recall_at[k].recall),
            threshold: None,
            tp: mean(&|r| r.recall_at[k].tp),
            fp: mean(&|r| r.recall_at[k].fp),
        })
        .collect();
    if reports.len() == 1 {
        return Ok(first.clone());
    }
    Ok(EvalReport {
        ap50: mean(&|r| r.ap50),
        recall_at,
        num_gt: first.num_gt,
        num_detections: mean(&|r| r.num_detections),
        area_km2: first.area_km2,
        runs: reports.iter().map(|r| r.runs).sum(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    fn gt(x: u32) -> Annotation {
        Annotation {
            class_id: 1,
            bbox: BBox::new(x, 0, 10, 10),
            image_id: "a".into(),
        }
    }

    fn det(x: u32, conf: f64) -> Detection {
        Detection {
            image_id: "a".into(),
            class_id: 1,
            bbox: BBox::new(x, 0, 10, 10),
            confidence: conf,
        }
    }

    #[test]
    fn iou_cases() {
        let a = BBox::new(0, 0, 10, 10);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &BBox::new(20, 20, 5, 5)), 0.0);
        assert!((iou(&a, &BBox::new(5, 0, 10, 10)) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn one_gt_consumed_once() {
        let flags = match_detections(&[det(0, 0.9), det(0, 0.8)], &[gt(0)], 0.5);
        assert_eq!(flags, [true, false]);
    }

    #[test]
    fn threshold_boundary() {
        // 100 x 100 GT vs a shifted box: IoU = 49 / 100 exactly needs care,
        // so construct intersection 49*100 over union 10000+10000-4900.
        let g = Annotation {
            class_id: 1,
            bbox: BBox::new(0, 0, 100, 100),
            image_id: "a".into(),
        };
        let d = Detection {
            image_id: "a".into(),
            class_id: 1,
            bbox: BBox::new(0, 0, 49, 100),
            confidence: 0.9,
        };
        assert!((iou(&d.bbox, &g.bbox) - 0.49).abs() < 1e-15);
        assert_eq!(match_detections(&[d], &[g], 0.5), [false]);
    }

    #[test]
    fn class_and_image_must_agree() {
        let mut d = det(0, 0.9);
        d.class_id = 2;
        let mut e = det(0, 0.9);
        e.image_id = "b".into();
        assert_eq!(match_detections(&[d, e], &[gt(0)], 0.5), [false, false]);
    }

    #[test]
    fn worked_fixture() {
        let gts = [gt(0), gt(100), gt(200)];
        let dets = [det(0, 0.9), det(50, 0.8), det(100, 0.7)];
        assert_eq!(match_detections(&dets, &gts, 0.5), [true, false, true]);
        let ap = ap50(&dets, &gts).unwrap();
        assert!((ap - 5.0 / 9.0).abs() < 1e-12, "{ap}");
    }

    #[test]
    fn perfect_and_empty() {
        let gts = [gt(0), gt(100)];
        assert_eq!(ap50(&[det(0, 0.3), det(100, 0.6)], &gts).unwrap(), 1.0);
        assert_eq!(ap50(&[], &gts).unwrap(), 0.0);
        assert_eq!(ap50(&[det(0, 0.3)], &[]), Err(MetricsError::NoGroundTruth));
    }

    #[test]
    fn recall_at_fa_fixture() {
        // 10 GT over 2 km^2; 7 TPs at >= 0.5, one FP at 0.6, three at 0.3.
        let gts: Vec<Annotation> = (0..10).map(|i| gt(i * 100)).collect();
        let mut dets: Vec<Detection> = (0..7).map(|i| det(i * 100, 0.5 + 0.05 * i as f64)).collect();
        dets.push(det(2000, 0.6));
        for k in 0..3 {
            dets.push(det(3000 + 100 * k, 0.3));
        }
        let r = recall_at_fa(&dets, &gts, 2.0, 1.0).unwrap();
        assert!((r - 0.7).abs() < 1e-12);
        // Half a false alarm per km^2 is still enough.
        assert!((recall_at_fa(&dets, &gts, 2.0, 0.5).unwrap() - 0.7).abs() < 1e-12);
        // With no budget only thresholds above the 0.6 FP qualify.
        let strict = operating_point(&dets, &gts, 2.0, 0.0).unwrap();
        assert_eq!(strict.fp, 0.0);
        assert!((strict.recall - 0.4).abs() < 1e-12);
        assert_eq!(recall_at_fa(&dets, &gts, 0.0, 1.0), Err(MetricsError::BadArea(0.0)));
    }

    #[test]
    fn no_false_alarms_means_full_recall() {
        let gts = [gt(0), gt(100), gt(200)];
        let dets = [det(0, 0.9), det(100, 0.2)];
        for alpha in [0.0, 0.25, 1.0] {
            assert!((recall_at_fa(&dets, &gts, 1.0, alpha).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn inspection_burden() {
        let f = inspection_fraction(133.0, 133.0, 0.3, 1.0);
        assert!((f * 100.0 - 0.16).abs() < 0.005, "{f}");
    }

    fn report(ap: f64, alphas: &[f64]) -> EvalReport {
        EvalReport {
            ap50: ap,
            recall_at: alphas
                .iter()
                .map(|&a| OperatingPoint {
                    alpha: a,
                    recall: ap,
                    threshold: Some(0.5),
                    tp: 1.0,
                    fp: 0.0,
                })
                .collect(),
            num_gt: 3,
            num_detections: 3.0,
            area_km2: 1.0,
            runs: 1,
        }
    }

    #[test]
    fn aggregate_means() {
        let r = aggregate_runs(&[report(0.33, &[1.0]), report(0.34, &[1.0]), report(0.35, &[1.0])]).unwrap();
        assert!((r.ap50 - 0.34).abs() < 1e-12);
        assert!((r.recall(1.0).unwrap() - 0.34).abs() < 1e-12);
        assert_eq!(r.runs, 3);
    }

    #[test]
    fn aggregate_single_and_mismatch() {
        let one = report(0.4, &[1.0]);
        assert_eq!(aggregate_runs(std::slice::from_ref(&one)).unwrap(), one);
        assert_eq!(
            aggregate_runs(&[report(0.4, &[1.0]), report(0.4, &[0.5, 1.0])]),
            Err(MetricsError::Mismatch("alpha set"))
        );
        let mut other = report(0.4, &[1.0]);
        other.area_km2 = 2.0;
        assert_eq!(aggregate_runs(&[one, other]), Err(MetricsError::Mismatch("area_km2")));
        assert_eq!(aggregate_runs(&[]), Err(MetricsError::NoReports));
    }

    fn fixture() -> impl proptest::strategy::Strategy<Value = (Vec<Detection>, Vec<Annotation>)> {
        use proptest::prelude::*;
        let gts = proptest::collection::vec((0u32..4, 0u32..2), 1..5);
        let dets = proptest::collection::vec((0u32..6, 0u32..5, 0u32..2, 1u32..6), 0..7);
        (gts, dets).prop_map(|(gs, ds)| {
            let gts = gs
                .into_iter()
                .map(|(slot, img)| Annotation {
                    class_id: 1,
                    bbox: BBox::new(slot * 40, 0, 20, 20),
                    image_id: img.to_string(),
                })
                .collect();
            let dets = ds
                .into_iter()
                .map(|(slot, jitter, img, conf)| Detection {
                    image_id: img.to_string(),
                    class_id: 1,
                    bbox: BBox::new(slot * 40 + jitter * 3, jitter, 20, 20),
                    confidence: conf as f64 / 5.0,
                })
                .collect();
            (dets, gts)
        })
    }

    proptest::proptest! {
        #[test]
        fn recall_monotone_in_alpha((dets, gts) in fixture(), area in 0.1f64..4.0) {
            let mut prev = 0.0;
            for alpha in [0.0, 0.25, 0.5, 1.0, 2.0, 10.0] {
                let r = recall_at_fa(&dets, &gts, area, alpha).unwrap();
                proptest::prop_assert!(r >= prev);
                prev = r;
            }
        }

        #[test]
        fn ap_invariant_under_monotone_confidence_map((dets, gts) in fixture()) {
            let squashed: Vec<Detection> = dets
                .iter()
                .map(|d| Detection { confidence: (d.confidence * d.confidence + 0.01) / 2.0, ..d.clone() })
                .collect();
            proptest::prop_assert_eq!(ap50(&dets, &gts).unwrap(), ap50(&squashed, &gts).unwrap());
        }

        #[test]
        fn matching_ignores_input_order((dets, gts) in fixture(), rot in 0usize..7) {
            let flags = match_detections(&dets, &gts, 0.5);
            let mut d2 = dets.clone();
            let mut g2 = gts.clone();
            let k = rot % d2.len().max(1);
            d2.rotate_left(k);
            g2.reverse();
            let mut flags2 = match_detections(&d2, &g2, 0.5);
            flags2.rotate_right(k);
            proptest::prop_assert_eq!(flags, flags2);
        }

        #[test]
        fn rates_in_unit_interval((dets, gts) in fixture()) {
            let ap = ap50(&dets, &gts).unwrap();
            proptest::prop_assert!((0.0..=1.0).contains(&ap));
        }
    }
}
