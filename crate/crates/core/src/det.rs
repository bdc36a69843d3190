//! Lesion-level evaluation: IoU, confidence-ordered detection matching,
//! FROC curves, sensitivity at fixed false-positive rates, and the
//! per-finding detection report.

use crate::bootstrap::{bootstrap_ci, BootstrapConfig, BootstrapError};
use crate::curve::{CurveKind, CurveSeries, Interval};
use crate::model::BBox;
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.4;
pub const DEFAULT_FPPI_RATES: [f64; 5] = [0.25, 0.5, 1.0, 2.0, 4.0];

#[derive(Debug, Error, PartialEq)]
pub enum DetError {
    #[error("records cover different images: {0:?}")]
    MixedImages(Vec<String>),
    #[error("no ground-truth boxes for class {0:?}")]
    NoPositivesForClass(String),
    #[error("froc_score expects exactly 5 sensitivities, got {0}")]
    WrongArity(usize),
    #[error(transparent)]
    Bootstrap(#[from] BootstrapError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub image_id: String,
    pub class: String,
    pub box_: BBox,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthBox {
    pub image_id: String,
    pub class: String,
    pub box_: BBox,
}

/// Intersection over union of two boxes, generic over the scalar type.
pub fn iou_value<S: Scalar>(a: &[S; 4], b: &[S; 4]) -> S {
    let max = |x: S, y: S| if x > y { x } else { y };
    let min = |x: S, y: S| if x < y { x } else { y };
    let ix0 = max(a[0].clone(), b[0].clone());
    let iy0 = max(a[1].clone(), b[1].clone());
    let ix1 = min(a[2].clone(), b[2].clone());
    let iy1 = min(a[3].clone(), b[3].clone());
    if ix1 <= ix0 || iy1 <= iy0 {
        return S::zero();
    }
    let inter = (ix1 - ix0) * (iy1 - iy0);
    let area = |r: &[S; 4]| (r[2].clone() - r[0].clone()) * (r[3].clone() - r[1].clone());
    let union = area(a) + area(b) - inter.clone();
    inter / union
}

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    iou_value(
        &[a.x_min, a.y_min, a.x_max, a.y_max],
        &[b.x_min, b.y_min, b.x_max, b.y_max],
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    /// (detection index, ground-truth index, iou)
    pub matched: Vec<(usize, usize, f64)>,
    pub unmatched_detections: Vec<usize>,
    pub unmatched_ground_truths: Vec<usize>,
}

/// Greedy per-class matching: detections in descending score (input order
/// on ties) each take the unmatched same-class ground truth of highest IoU,
/// requiring IoU strictly above the threshold.
pub fn match_detections(
    dets: &[DetectionRecord],
    gts: &[GroundTruthBox],
    iou_threshold: f64,
) -> Result<MatchResult, DetError> {
    let images: BTreeSet<&str> = dets
        .iter()
        .map(|d| d.image_id.as_str())
        .chain(gts.iter().map(|g| g.image_id.as_str()))
        .collect();
    if images.len() > 1 {
        return Err(DetError::MixedImages(
            images.into_iter().map(String::from).collect(),
        ));
    }

    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score).then(a.cmp(&b)));

    let mut gt_taken = vec![false; gts.len()];
    let mut matched = Vec::new();
    let mut unmatched_detections = Vec::new();
    for di in order {
        let det = &dets[di];
        let mut best: Option<(usize, f64)> = None;
        for (gi, gt) in gts.iter().enumerate() {
            if gt_taken[gi] || gt.class != det.class {
                continue;
            }
            let overlap = iou(&det.box_, &gt.box_);
            if overlap > iou_threshold && best.map_or(true, |(_, b)| overlap > b) {
                best = Some((gi, overlap));
            }
        }
        match best {
            Some((gi, overlap)) => {
                gt_taken[gi] = true;
                matched.push((di, gi, overlap));
            }
            None => unmatched_detections.push(di),
        }
    }
    matched.sort_by_key(|&(di, _, _)| di);
    unmatched_detections.sort_unstable();
    let unmatched_ground_truths = (0..gts.len()).filter(|&gi| !gt_taken[gi]).collect();
    Ok(MatchResult {
        matched,
        unmatched_detections,
        unmatched_ground_truths,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrocPoint {
    pub fppi: f64,
    pub sensitivity: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrocCurve {
    pub class: String,
    /// Sweep points in descending threshold order (non-decreasing FPPI).
    pub points: Vec<FrocPoint>,
    pub total_ground_truths: usize,
    pub image_count: usize,
}

impl FrocCurve {
    pub fn as_series(&self) -> CurveSeries {
        CurveSeries::new(
            CurveKind::Froc,
            self.class.clone(),
            self.points.iter().map(|p| (p.fppi, p.sensitivity)).collect(),
        )
    }
}

/// All detections and ground truths of an evaluation set, with the full
/// image roster (images without ground truth still count toward FPPI).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionDataset {
    pub image_ids: Vec<String>,
    pub detections: Vec<DetectionRecord>,
    pub ground_truths: Vec<GroundTruthBox>,
}

impl DetectionDataset {
    fn subset(&self, image_indices: &[usize]) -> DetectionDataset {
        // resampled images get fresh ids so duplicates stay distinct
        let mut detections = Vec::new();
        let mut ground_truths = Vec::new();
        let mut image_ids = Vec::with_capacity(image_indices.len());
        for (k, &i) in image_indices.iter().enumerate() {
            let old = &self.image_ids[i];
            let new = format!("{k}#{old}");
            for d in self.detections.iter().filter(|d| &d.image_id == old) {
                let mut d = d.clone();
                d.image_id = new.clone();
                detections.push(d);
            }
            for g in self.ground_truths.iter().filter(|g| &g.image_id == old) {
                let mut g = g.clone();
                g.image_id = new.clone();
                ground_truths.push(g);
            }
            image_ids.push(new);
        }
        DetectionDataset {
            image_ids,
            detections,
            ground_truths,
        }
    }
}

/// FROC sweep for one finding class over unique detection scores,
/// descending. Each point reports (false positives / images, matched
/// ground truths / total ground truths) for detections at or above the
/// threshold.
pub fn froc_curve(
    dataset: &DetectionDataset,
    class: &str,
    iou_threshold: f64,
) -> Result<FrocCurve, DetError> {
    let gts: Vec<&GroundTruthBox> = dataset
        .ground_truths
        .iter()
        .filter(|g| g.class == class)
        .collect();
    if gts.is_empty() {
        return Err(DetError::NoPositivesForClass(class.to_string()));
    }
    let dets: Vec<&DetectionRecord> = dataset
        .detections
        .iter()
        .filter(|d| d.class == class)
        .collect();
    let total_gt = gts.len();
    let n_images = dataset.image_ids.len().max(1);

    let mut thresholds: Vec<f64> = dets.iter().map(|d| d.score).collect();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();

    let mut by_image: BTreeMap<&str, (Vec<DetectionRecord>, Vec<GroundTruthBox>)> = BTreeMap::new();
    for g in &gts {
        by_image
            .entry(g.image_id.as_str())
            .or_default()
            .1
            .push((*g).clone());
    }
    for d in &dets {
        by_image
            .entry(d.image_id.as_str())
            .or_default()
            .0
            .push((*d).clone());
    }

    let mut points = Vec::with_capacity(thresholds.len());
    for t in thresholds {
        let mut tp = 0usize;
        let mut fp = 0usize;
        for (img_dets, img_gts) in by_image.values() {
            let kept: Vec<DetectionRecord> = img_dets
                .iter()
                .filter(|d| d.score >= t)
                .cloned()
                .collect();
            let result = match_detections(&kept, img_gts, iou_threshold)?;
            tp += result.matched.len();
            fp += result.unmatched_detections.len();
        }
        points.push(FrocPoint {
            fppi: fp as f64 / n_images as f64,
            sensitivity: tp as f64 / total_gt as f64,
            threshold: t,
        });
    }
    Ok(FrocCurve {
        class: class.to_string(),
        points,
        total_ground_truths: total_gt,
        image_count: n_images,
    })
}

/// Step-function reading: for each rate, the sensitivity of the
/// lowest-threshold sweep point whose FPPI does not exceed the rate;
/// 0 when no point qualifies.
pub fn sensitivity_at_fppi(curve: &FrocCurve, rates: &[f64]) -> Vec<(f64, f64)> {
    rates
        .iter()
        .map(|&rate| {
            let sens = curve
                .points
                .iter()
                .filter(|p| p.fppi <= rate)
                .last()
                .map_or(0.0, |p| p.sensitivity);
            (rate, sens)
        })
        .collect()
}

/// Mean of the sensitivities at the five standard FPPI rates.
pub fn froc_score(values: &[f64]) -> Result<f64, DetError> {
    if values.len() != 5 {
        return Err(DetError::WrongArity(values.len()));
    }
    Ok(values.iter().sum::<f64>() / 5.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FindingRow {
    pub finding: String,
    /// One interval per queried FPPI rate, in rate order.
    pub sensitivities: Vec<Interval>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub rates: Vec<f64>,
    pub rows: Vec<FindingRow>,
    pub mean: FindingRow,
    pub iou_threshold: f64,
}

fn sens_at_rate(dataset: &DetectionDataset, class: &str, iou_threshold: f64, rate: f64) -> Option<f64> {
    let curve = froc_curve(dataset, class, iou_threshold).ok()?;
    Some(sensitivity_at_fppi(&curve, &[rate])[0].1)
}

fn no_finding_sensitivity(dataset: &DetectionDataset) -> Option<f64> {
    let with_gt: BTreeSet<&str> = dataset
        .ground_truths
        .iter()
        .map(|g| g.image_id.as_str())
        .collect();
    let with_det: BTreeSet<&str> = dataset
        .detections
        .iter()
        .map(|d| d.image_id.as_str())
        .collect();
    let free: Vec<&str> = dataset
        .image_ids
        .iter()
        .map(String::as_str)
        .filter(|id| !with_gt.contains(id))
        .collect();
    if free.is_empty() {
        return None;
    }
    let correct = free.iter().filter(|id| !with_det.contains(*id)).count();
    Some(correct as f64 / free.len() as f64)
}

/// Per-finding detection table: sensitivity at each FPPI rate with
/// image-level bootstrap CIs, a No Finding row (fraction of truly
/// finding-free images with zero detections, constant across rates), and a
/// Mean row of column means.
pub fn per_finding_detection_report(
    dataset: &DetectionDataset,
    classes: &[String],
    rates: &[f64],
    iou_threshold: f64,
    cfg: BootstrapConfig,
) -> Result<DetectionReport, DetError> {
    let n_images = dataset.image_ids.len();
    let mut rows = Vec::new();
    for class in classes {
        let curve = froc_curve(dataset, class, iou_threshold)?;
        let mut sensitivities = Vec::new();
        for &(rate, point) in sensitivity_at_fppi(&curve, rates).iter() {
            let iv = bootstrap_ci(
                n_images,
                point,
                |idx| sens_at_rate(&dataset.subset(idx), class, iou_threshold, rate),
                cfg,
            )?;
            sensitivities.push(iv);
        }
        rows.push(FindingRow {
            finding: class.clone(),
            sensitivities,
        });
    }
    if let Some(point) = no_finding_sensitivity(dataset) {
        let iv = bootstrap_ci(
            n_images,
            point,
            |idx| no_finding_sensitivity(&dataset.subset(idx)),
            cfg,
        )?;
        rows.push(FindingRow {
            finding: "No Finding".to_string(),
            sensitivities: vec![iv; rates.len()],
        });
    }
    let mean = FindingRow {
        finding: "Mean".to_string(),
        sensitivities: (0..rates.len())
            .map(|ri| {
                let mean_point = rows
                    .iter()
                    .map(|r| r.sensitivities[ri].point)
                    .sum::<f64>()
                    / rows.len() as f64;
                Interval::degenerate(mean_point)
            })
            .collect(),
    };
    Ok(DetectionReport {
        rates: rates.to_vec(),
        rows,
        mean,
        iou_threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bbox(x0: f64, y0: f64, x1: f64, y1: f64) -> BBox {
        BBox::new(x0, y0, x1, y1).unwrap()
    }

    fn det(image: &str, class: &str, b: BBox, score: f64) -> DetectionRecord {
        DetectionRecord {
            image_id: image.to_string(),
            class: class.to_string(),
            box_: b,
            score,
        }
    }

    fn gt(image: &str, class: &str, b: BBox) -> GroundTruthBox {
        GroundTruthBox {
            image_id: image.to_string(),
            class: class.to_string(),
            box_: b,
        }
    }

    #[test]
    fn iou_fixtures() {
        let a = bbox(0.0, 0.0, 10.0, 10.0);
        assert_eq!(iou(&a, &a), 1.0);
        let disjoint = bbox(20.0, 20.0, 30.0, 30.0);
        assert_eq!(iou(&a, &disjoint), 0.0);
        let b = bbox(5.0, 5.0, 15.0, 15.0);
        assert!((iou(&a, &b) - 1.0 / 7.0).abs() < 1e-15);
        assert_eq!(iou(&a, &b), iou(&b, &a));
    }

    #[test]
    fn match_single_pair_above_threshold() {
        // IoU([0,0,10,10], [1,1,10,10]) = 81/100
        let dets = vec![det("i", "Nodule/Mass", bbox(1.0, 1.0, 10.0, 10.0), 0.9)];
        let gts = vec![gt("i", "Nodule/Mass", bbox(0.0, 0.0, 10.0, 10.0))];
        let m = match_detections(&dets, &gts, 0.4).unwrap();
        assert_eq!(m.matched.len(), 1);
        assert!((m.matched[0].2 - 0.81).abs() < 1e-12);
        assert!(m.unmatched_detections.is_empty());
        assert!(m.unmatched_ground_truths.is_empty());
    }

    #[test]
    fn match_iou_exactly_at_threshold_is_false_positive() {
        // IoU([0,0,10,10], [0,0,4,10]) = 40/100 exactly
        let dets = vec![det("i", "Opacity", bbox(0.0, 0.0, 4.0, 10.0), 0.9)];
        let gts = vec![gt("i", "Opacity", bbox(0.0, 0.0, 10.0, 10.0))];
        let m = match_detections(&dets, &gts, 0.4).unwrap();
        assert!(m.matched.is_empty());
        assert_eq!(m.unmatched_detections, vec![0]);
        assert_eq!(m.unmatched_ground_truths, vec![0]);
    }

    #[test]
    fn match_higher_score_takes_the_ground_truth() {
        let target = bbox(0.0, 0.0, 10.0, 10.0);
        let dets = vec![
            det("i", "Opacity", bbox(0.0, 0.0, 9.0, 10.0), 0.8),
            det("i", "Opacity", bbox(1.0, 0.0, 10.0, 10.0), 0.9),
        ];
        let gts = vec![gt("i", "Opacity", target)];
        let m = match_detections(&dets, &gts, 0.4).unwrap();
        assert_eq!(m.matched, vec![(1, 0, iou(&dets[1].box_, &gts[0].box_))]);
        assert_eq!(m.unmatched_detections, vec![0]);
    }

    #[test]
    fn match_rejects_cross_class_and_mixed_images() {
        let dets = vec![det("i", "Opacity", bbox(0.0, 0.0, 10.0, 10.0), 0.9)];
        let gts = vec![gt("i", "Nodule/Mass", bbox(0.0, 0.0, 10.0, 10.0))];
        let m = match_detections(&dets, &gts, 0.4).unwrap();
        assert!(m.matched.is_empty());

        let other = vec![gt("j", "Opacity", bbox(0.0, 0.0, 10.0, 10.0))];
        assert!(matches!(
            match_detections(&dets, &other, 0.4),
            Err(DetError::MixedImages(_))
        ));
    }

    fn two_image_fixture() -> DetectionDataset {
        let target = bbox(0.0, 0.0, 10.0, 10.0);
        DetectionDataset {
            image_ids: vec!["img1".to_string(), "img2".to_string()],
            detections: vec![
                det("img1", "Opacity", bbox(1.0, 1.0, 10.0, 10.0), 0.9),
                det("img1", "Opacity", bbox(50.0, 50.0, 60.0, 60.0), 0.8),
                det("img2", "Opacity", bbox(10.0, 10.0, 20.0, 20.0), 0.7),
            ],
            ground_truths: vec![gt("img1", "Opacity", target)],
        }
    }

    #[test]
    fn froc_two_image_fixture() {
        let curve = froc_curve(&two_image_fixture(), "Opacity", 0.4).unwrap();
        assert_eq!(curve.points.len(), 3);
        // threshold 0.9: 1 TP, 0 FP; 0.8: 1 TP, 1 FP; 0.7: 1 TP, 2 FP
        assert_eq!(curve.points[0], FrocPoint { fppi: 0.0, sensitivity: 1.0, threshold: 0.9 });
        assert_eq!(curve.points[1], FrocPoint { fppi: 0.5, sensitivity: 1.0, threshold: 0.8 });
        assert_eq!(curve.points[2], FrocPoint { fppi: 1.0, sensitivity: 1.0, threshold: 0.7 });
        let at = sensitivity_at_fppi(&curve, &[1.0]);
        assert_eq!(at[0], (1.0, 1.0));
    }

    #[test]
    fn froc_zero_detections() {
        let dataset = DetectionDataset {
            image_ids: vec!["img1".to_string()],
            detections: vec![],
            ground_truths: vec![gt("img1", "Opacity", bbox(0.0, 0.0, 10.0, 10.0))],
        };
        let curve = froc_curve(&dataset, "Opacity", 0.4).unwrap();
        assert!(curve.points.is_empty());
        let at = sensitivity_at_fppi(&curve, &DEFAULT_FPPI_RATES);
        assert!(at.iter().all(|&(_, s)| s == 0.0));
    }

    #[test]
    fn froc_requires_positives() {
        let dataset = DetectionDataset {
            image_ids: vec!["img1".to_string()],
            detections: vec![],
            ground_truths: vec![],
        };
        assert!(matches!(
            froc_curve(&dataset, "Opacity", 0.4),
            Err(DetError::NoPositivesForClass(_))
        ));
    }

    #[test]
    fn sensitivity_at_fppi_monotone_in_rate() {
        let curve = froc_curve(&two_image_fixture(), "Opacity", 0.4).unwrap();
        let at = sensitivity_at_fppi(&curve, &DEFAULT_FPPI_RATES);
        for w in at.windows(2) {
            assert!(w[0].1 <= w[1].1);
        }
    }

    #[test]
    fn froc_score_fixtures() {
        assert_eq!(froc_score(&[1.0; 5]).unwrap(), 1.0);
        assert_eq!(froc_score(&[0.0; 5]).unwrap(), 0.0);
        assert_eq!(froc_score(&[0.3; 5]).unwrap(), 0.3);
        assert!(matches!(froc_score(&[0.5; 4]), Err(DetError::WrongArity(4))));
    }

    #[test]
    fn iou_scale_invariance() {
        let a = bbox(0.0, 0.0, 10.0, 10.0);
        let b = bbox(5.0, 5.0, 15.0, 15.0);
        let scale = 3.5;
        let sa = bbox(0.0, 0.0, 10.0 * scale, 10.0 * scale);
        let sb = bbox(5.0 * scale, 5.0 * scale, 15.0 * scale, 15.0 * scale);
        assert!((iou(&a, &b) - iou(&sa, &sb)).abs() < 1e-12);
    }

    #[test]
    fn no_finding_row_all_correct() {
        let dataset = DetectionDataset {
            image_ids: vec!["a".to_string(), "b".to_string()],
            detections: vec![],
            ground_truths: vec![],
        };
        assert_eq!(no_finding_sensitivity(&dataset), Some(1.0));
    }

    #[test]
    fn detection_report_mean_is_column_mean() {
        let report = per_finding_detection_report(
            &two_image_fixture(),
            &["Opacity".to_string()],
            &DEFAULT_FPPI_RATES,
            0.4,
            BootstrapConfig::new(100, 3),
        )
        .unwrap();
        // rows: Opacity + No Finding (img2 is finding-free but has a det)
        assert_eq!(report.rows.len(), 2);
        assert_eq!(report.rows[1].finding, "No Finding");
        assert_eq!(report.rows[1].sensitivities[0].point, 0.0);
        for ri in 0..DEFAULT_FPPI_RATES.len() {
            let col_mean = report
                .rows
                .iter()
                .map(|r| r.sensitivities[ri].point)
                .sum::<f64>()
                / report.rows.len() as f64;
            assert!((report.mean.sensitivities[ri].point - col_mean).abs() < 1e-15);
        }
    }
}
