//! Shared curve and confidence-interval carriers.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveKind {
    Roc,
    Froc,
}

/// A polyline with non-decreasing x, e.g. a ROC or FROC sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSeries {
    pub kind: CurveKind,
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

impl CurveSeries {
    pub fn new(kind: CurveKind, label: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        debug_assert!(points.windows(2).all(|w| w[0].0 <= w[1].0));
        CurveSeries {
            kind,
            label: label.into(),
            points,
        }
    }
}

/// Bootstrap percentile confidence interval around a point estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub point: f64,
    pub lo: f64,
    pub hi: f64,
    /// Confidence level in percent.
    pub level: f64,
    pub replications: usize,
}

impl Interval {
    pub fn degenerate(point: f64) -> Self {
        Interval {
            point,
            lo: point,
            hi: point,
            level: 95.0,
            replications: 0,
        }
    }
}
