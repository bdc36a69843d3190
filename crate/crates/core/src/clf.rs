//! Per-label classification metrics: ROC curves, AUROC, threshold operating
//! points, Youden-optimal thresholds, and the per-label report table.
//!
//! The curve kernels are generic over [`Scalar`] so tests can run them in
//! exact rational arithmetic.

use crate::bootstrap::{bootstrap_ci, BootstrapConfig, BootstrapError};
use crate::curve::{CurveKind, CurveSeries, Interval};
use crate::scalar::{from_count, Scalar};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ClfError {
    #[error("degenerate class balance: need at least one positive and one negative")]
    DegenerateClassBalance,
    #[error("duplicate unit id {0:?}")]
    DuplicateUnit(String),
    #[error("score {score} out of [0, 1] for unit {unit_id:?}")]
    ScoreOutOfRange { unit_id: String, score: f64 },
    #[error("labels cover different units; first mismatch at label {0:?}")]
    MismatchedUnits(String),
    #[error("no threshold for label {0:?}")]
    MissingThreshold(String),
    #[error(transparent)]
    Bootstrap(#[from] BootstrapError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredItem {
    pub unit_id: String,
    pub score: f64,
    pub truth: bool,
}

/// Model scores against the reference standard for one label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredLabelSet {
    items: Vec<ScoredItem>,
}

impl ScoredLabelSet {
    pub fn new(items: Vec<ScoredItem>) -> Result<Self, ClfError> {
        let mut seen = std::collections::BTreeSet::new();
        for it in &items {
            if !(0.0..=1.0).contains(&it.score) {
                return Err(ClfError::ScoreOutOfRange {
                    unit_id: it.unit_id.clone(),
                    score: it.score,
                });
            }
            if !seen.insert(it.unit_id.as_str()) {
                return Err(ClfError::DuplicateUnit(it.unit_id.clone()));
            }
        }
        Ok(ScoredLabelSet { items })
    }

    pub fn items(&self) -> &[ScoredItem] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    fn scored(&self) -> Vec<(f64, bool)> {
        self.items.iter().map(|it| (it.score, it.truth)).collect()
    }

    fn subset(&self, indices: &[usize]) -> Vec<(f64, bool)> {
        indices
            .iter()
            .map(|&i| (self.items[i].score, self.items[i].truth))
            .collect()
    }
}

/// ROC sweep over unique scores, descending; tied scores collapse into one
/// step. Returns (FPR, TPR) points including (0,0) and (1,1).
pub fn roc_points<S: Scalar>(scored: &[(S, bool)]) -> Result<Vec<(S, S)>, ClfError> {
    let pos = scored.iter().filter(|(_, t)| *t).count();
    let neg = scored.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(ClfError::DegenerateClassBalance);
    }
    let mut sorted: Vec<&(S, bool)> = scored.iter().collect();
    sorted.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("comparable scores"));

    let (p, n) = (from_count::<S>(pos), from_count::<S>(neg));
    let mut points = vec![(S::zero(), S::zero())];
    let mut tp = S::zero();
    let mut fp = S::zero();
    let mut i = 0;
    while i < sorted.len() {
        let score = &sorted[i].0;
        while i < sorted.len() && sorted[i].0 == *score {
            if sorted[i].1 {
                tp = tp + S::one();
            } else {
                fp = fp + S::one();
            }
            i += 1;
        }
        points.push((fp.clone() / n.clone(), tp.clone() / p.clone()));
    }
    Ok(points)
}

/// Trapezoidal area under a polyline with non-decreasing x.
pub fn trapezoid_area<S: Scalar>(points: &[(S, S)]) -> S {
    let two = S::one() + S::one();
    let mut area = S::zero();
    for w in points.windows(2) {
        let dx = w[1].0.clone() - w[0].0.clone();
        area = area + dx * (w[0].1.clone() + w[1].1.clone()) / two.clone();
    }
    area
}

/// AUROC as trapezoidal area under the ROC sweep.
pub fn auroc_value<S: Scalar>(scored: &[(S, bool)]) -> Result<S, ClfError> {
    Ok(trapezoid_area(&roc_points(scored)?))
}

pub fn roc_curve(data: &ScoredLabelSet) -> Result<CurveSeries, ClfError> {
    let points = roc_points(&data.scored())?;
    Ok(CurveSeries::new(CurveKind::Roc, "", points))
}

pub fn auroc(data: &ScoredLabelSet) -> Result<f64, ClfError> {
    auroc_value(&data.scored())
}

/// Confusion counts and derived rates at one threshold. Cells whose
/// denominator is zero carry `None`, never a silent zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub threshold: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub f1: Option<f64>,
    pub fpr: Option<f64>,
    pub fnr: Option<f64>,
}

/// Classification rule: score >= threshold predicts positive.
pub fn operating_point(data: &ScoredLabelSet, threshold: f64) -> OperatingPoint {
    let (mut tp, mut fp, mut fn_, mut tn) = (0usize, 0usize, 0usize, 0usize);
    for it in data.items() {
        let pred = it.score >= threshold;
        match (pred, it.truth) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    let sensitivity = ratio(tp, tp + fn_);
    let specificity = ratio(tn, tn + fp);
    OperatingPoint {
        threshold,
        tp,
        fp,
        fn_,
        tn,
        sensitivity,
        specificity,
        f1: ratio(2 * tp, 2 * tp + fp + fn_),
        fpr: specificity.map(|s| 1.0 - s),
        fnr: sensitivity.map(|s| 1.0 - s),
    }
}

/// Threshold among unique observed scores maximizing J = sensitivity +
/// specificity - 1; ties broken by the larger threshold.
pub fn youden_threshold(data: &ScoredLabelSet) -> Result<(f64, OperatingPoint), ClfError> {
    // validates class balance
    roc_points(&data.scored())?;
    let mut candidates: Vec<f64> = data.items().iter().map(|it| it.score).collect();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    let mut best: Option<(f64, OperatingPoint, f64)> = None;
    // ascending sweep with >= keeps the largest threshold among ties
    for t in candidates {
        let op = operating_point(data, t);
        let j = op.sensitivity.unwrap_or(0.0) + op.specificity.unwrap_or(0.0) - 1.0;
        match &best {
            Some((_, _, best_j)) if j < *best_j => {}
            _ => best = Some((t, op, j)),
        }
    }
    let (t, op, _) = best.expect("non-empty by class-balance check");
    Ok((t, op))
}

/// AUROC with a bootstrap percentile CI, resampling at the unit level.
pub fn auroc_interval(data: &ScoredLabelSet, cfg: BootstrapConfig) -> Result<Interval, ClfError> {
    let point = auroc(data)?;
    let iv = bootstrap_ci(
        data.len(),
        point,
        |idx| auroc_value(&data.subset(idx)).ok(),
        cfg,
    )?;
    Ok(iv)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ThresholdPolicy {
    Youden,
    Fixed(BTreeMap<String, f64>),
}

/// Scores for one label over the evaluation units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelScores {
    pub label: String,
    pub data: ScoredLabelSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelMetricsRow {
    pub label: String,
    pub threshold: f64,
    pub auroc: Option<Interval>,
    pub sensitivity: Option<Interval>,
    pub specificity: Option<Interval>,
    pub f1: Option<Interval>,
    pub fpr: Option<Interval>,
    pub fnr: Option<Interval>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub rows: Vec<LabelMetricsRow>,
    /// Arithmetic mean of per-label point estimates; CI bootstraps the
    /// mean jointly over units. Undefined cells are excluded and counted.
    pub mean: LabelMetricsRow,
    pub undefined_cells: usize,
}

/// Arithmetic mean of the defined values; `None` when all are undefined.
pub fn mean_of_defined(values: &[Option<f64>]) -> Option<f64> {
    let defined: Vec<f64> = values.iter().filter_map(|v| *v).collect();
    if defined.is_empty() {
        None
    } else {
        Some(defined.iter().sum::<f64>() / defined.len() as f64)
    }
}

fn op_metric(data: &[(f64, bool)], threshold: f64, pick: fn(&OperatingPoint) -> Option<f64>) -> Option<f64> {
    let set = ScoredLabelSet {
        items: data
            .iter()
            .enumerate()
            .map(|(i, &(score, truth))| ScoredItem {
                unit_id: i.to_string(),
                score,
                truth,
            })
            .collect(),
    };
    pick(&operating_point(&set, threshold))
}

/// Per-label metric table mirroring a six-label classification report with
/// a Mean row. All labels must cover the same units in the same order.
pub fn per_label_classification_report(
    per_label: &[LabelScores],
    thresholds: &ThresholdPolicy,
    cfg: BootstrapConfig,
) -> Result<ClassificationReport, ClfError> {
    if per_label.is_empty() {
        return Err(ClfError::DegenerateClassBalance);
    }
    let units: Vec<&str> = per_label[0]
        .data
        .items()
        .iter()
        .map(|it| it.unit_id.as_str())
        .collect();
    for ls in per_label {
        let u: Vec<&str> = ls.data.items().iter().map(|it| it.unit_id.as_str()).collect();
        if u != units {
            return Err(ClfError::MismatchedUnits(ls.label.clone()));
        }
    }

    let metrics: [(fn(&OperatingPoint) -> Option<f64>,); 5] = [
        (|op| op.sensitivity,),
        (|op| op.specificity,),
        (|op| op.f1,),
        (|op| op.fpr,),
        (|op| op.fnr,),
    ];

    let mut rows = Vec::new();
    let mut undefined_cells = 0usize;
    let mut label_thresholds = Vec::new();
    for ls in per_label {
        let threshold = match thresholds {
            ThresholdPolicy::Youden => youden_threshold(&ls.data)?.0,
            ThresholdPolicy::Fixed(map) => *map
                .get(&ls.label)
                .ok_or_else(|| ClfError::MissingThreshold(ls.label.clone()))?,
        };
        label_thresholds.push(threshold);
        let auroc_iv = auroc_interval(&ls.data, cfg)?;
        let op = operating_point(&ls.data, threshold);
        let mut cells: Vec<Option<Interval>> = Vec::new();
        for (pick,) in metrics {
            let point = pick(&op);
            let cell = match point {
                None => {
                    undefined_cells += 1;
                    None
                }
                Some(p) => Some(bootstrap_ci(
                    ls.data.len(),
                    p,
                    |idx| op_metric(&ls.data.subset(idx), threshold, pick),
                    cfg,
                )?),
            };
            cells.push(cell);
        }
        rows.push(LabelMetricsRow {
            label: ls.label.clone(),
            threshold,
            auroc: Some(auroc_iv),
            sensitivity: cells[0],
            specificity: cells[1],
            f1: cells[2],
            fpr: cells[3],
            fnr: cells[4],
        });
    }

    // Mean row: point = mean of per-label points; CI bootstraps the mean
    // of the per-label metric over jointly resampled units.
    let pickers: [fn(&LabelMetricsRow) -> Option<Interval>; 6] = [
        |r| r.auroc,
        |r| r.sensitivity,
        |r| r.specificity,
        |r| r.f1,
        |r| r.fpr,
        |r| r.fnr,
    ];
    let mut mean_cells: Vec<Option<Interval>> = Vec::new();
    for (mi, pick_row) in pickers.iter().enumerate() {
        let points: Vec<Option<f64>> = rows.iter().map(|r| pick_row(r).map(|iv| iv.point)).collect();
        let Some(mean_point) = mean_of_defined(&points) else {
            mean_cells.push(None);
            continue;
        };
        let joint = |idx: &[usize]| -> Option<f64> {
            let per: Vec<Option<f64>> = per_label
                .iter()
                .zip(&label_thresholds)
                .map(|(ls, &t)| {
                    let sub = ls.data.subset(idx);
                    if mi == 0 {
                        auroc_value(&sub).ok()
                    } else {
                        op_metric(&sub, t, metrics[mi - 1].0)
                    }
                })
                .collect();
            mean_of_defined(&per)
        };
        mean_cells.push(Some(bootstrap_ci(units.len(), mean_point, joint, cfg)?));
    }
    let mean = LabelMetricsRow {
        label: "Mean".to_string(),
        threshold: f64::NAN,
        auroc: mean_cells[0],
        sensitivity: mean_cells[1],
        specificity: mean_cells[2],
        f1: mean_cells[3],
        fpr: mean_cells[4],
        fnr: mean_cells[5],
    };
    Ok(ClassificationReport {
        rows,
        mean,
        undefined_cells,
    })
}
