//! CSV / JSON-lines ingestion of annotation and prediction files.
//!
//! The annotation schema copies the public release layout:
//! `image_id,rad_id,class_name,x_min,y_min,x_max,y_max` with empty box
//! fields for global labels and "No finding" rows.

use cxr_core::model::{
    build_label_taxonomy, find_label, BBox, LabelKind, RaterRead, Session, NO_FINDING,
};
use cxr_core::clf::{ScoredItem, ScoredLabelSet};
use cxr_core::det::{DetectionRecord, GroundTruthBox};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("{path}:{line}: unknown class {class:?}")]
    UnknownClass {
        path: String,
        line: u64,
        class: String,
    },
    #[error("{path}:{line}: box fields must be all present or all absent")]
    PartialBox { path: String, line: u64 },
    #[error("{path}:{line}: malformed box: {reason}")]
    MalformedBox {
        path: String,
        line: u64,
        reason: String,
    },
    #[error("{path}:{line}: score {score} out of [0, 1]")]
    ScoreOutOfRange {
        path: String,
        line: u64,
        score: f64,
    },
    #[error("{path}:{line}: global label rows must not carry a box")]
    GlobalWithBox { path: String, line: u64 },
    #[error("{path}:{line}: local label rows require a box")]
    LocalWithoutBox { path: String, line: u64 },
    #[error("{path}:{line}: {reason}")]
    Malformed {
        path: String,
        line: u64,
        reason: String,
    },
    #[error("{path}: {source}")]
    Csv {
        path: String,
        source: csv::Error,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct AnnotationRow {
    pub image_id: String,
    pub rad_id: String,
    pub class_name: String,
    pub x_min: Option<f64>,
    pub y_min: Option<f64>,
    pub x_max: Option<f64>,
    pub y_max: Option<f64>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct PredictionRow {
    pub image_id: String,
    pub class_name: String,
    pub score: f64,
    #[serde(default)]
    pub x_min: Option<f64>,
    #[serde(default)]
    pub y_min: Option<f64>,
    #[serde(default)]
    pub x_max: Option<f64>,
    #[serde(default)]
    pub y_max: Option<f64>,
}

fn parse_box(
    path: &str,
    line: u64,
    x_min: Option<f64>,
    y_min: Option<f64>,
    x_max: Option<f64>,
    y_max: Option<f64>,
) -> Result<Option<BBox>, LoadError> {
    let fields = [x_min, y_min, x_max, y_max];
    let present = fields.iter().filter(|f| f.is_some()).count();
    match present {
        0 => Ok(None),
        4 => BBox::new(x_min.unwrap(), y_min.unwrap(), x_max.unwrap(), y_max.unwrap())
            .map(Some)
            .map_err(|e| LoadError::MalformedBox {
                path: path.to_string(),
                line,
                reason: e.to_string(),
            }),
        _ => Err(LoadError::PartialBox {
            path: path.to_string(),
            line,
        }),
    }
}

/// Loads an annotation CSV into per-(image, rater) reads. In strict mode
/// unknown class names are an error; in lenient mode they pass through,
/// typed by whether the row carries a box.
pub fn load_annotations(
    path: &Path,
    session: Session,
    strict: bool,
) -> Result<Vec<RaterRead>, LoadError> {
    let path_str = path.display().to_string();
    let mut reader = csv::Reader::from_path(path).map_err(|source| LoadError::Csv {
        path: path_str.clone(),
        source,
    })?;
    let taxonomy = build_label_taxonomy();
    let headers = reader
        .headers()
        .map_err(|source| LoadError::Csv {
            path: path_str.clone(),
            source,
        })?
        .clone();
    let mut grouped: BTreeMap<(String, String), RaterRead> = BTreeMap::new();
    for record in reader.records() {
        let record = record.map_err(|source| LoadError::Csv {
            path: path_str.clone(),
            source,
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let row: AnnotationRow =
            record
                .deserialize(Some(&headers))
                .map_err(|source| LoadError::Csv {
                    path: path_str.clone(),
                    source,
                })?;
        let bbox = parse_box(&path_str, line, row.x_min, row.y_min, row.x_max, row.y_max)?;
        let key = (row.image_id.clone(), row.rad_id.clone());
        let read = grouped.entry(key).or_insert_with(|| RaterRead {
            image_id: row.image_id.clone(),
            rater_id: row.rad_id.clone(),
            session,
            global_labels: Default::default(),
            findings: Vec::new(),
        });
        let class = row.class_name.trim();
        if class.eq_ignore_ascii_case(NO_FINDING) {
            read.global_labels.insert(NO_FINDING.to_string());
            continue;
        }
        match find_label(&taxonomy, class) {
            Some(label) => match (label.kind, bbox) {
                (LabelKind::Global, None) => {
                    read.global_labels.insert(label.name.clone());
                }
                (LabelKind::Global, Some(_)) => {
                    return Err(LoadError::GlobalWithBox {
                        path: path_str,
                        line,
                    })
                }
                (LabelKind::Local, Some(b)) => read.findings.push((label.name.clone(), b)),
                (LabelKind::Local, None) => {
                    return Err(LoadError::LocalWithoutBox {
                        path: path_str,
                        line,
                    })
                }
            },
            None if strict => {
                return Err(LoadError::UnknownClass {
                    path: path_str,
                    line,
                    class: class.to_string(),
                })
            }
            None => match bbox {
                Some(b) => read.findings.push((class.to_string(), b)),
                None => {
                    read.global_labels.insert(class.to_string());
                }
            },
        }
    }
    Ok(grouped.into_values().collect())
}

/// Writes reads back to the annotation CSV schema; loading the output
/// yields equal reads.
pub fn write_annotations(reads: &[RaterRead], path: &Path) -> Result<(), LoadError> {
    let path_str = path.display().to_string();
    let mut writer = csv::Writer::from_path(path).map_err(|source| LoadError::Csv {
        path: path_str.clone(),
        source,
    })?;
    for read in reads {
        for label in &read.global_labels {
            writer
                .serialize(AnnotationRow {
                    image_id: read.image_id.clone(),
                    rad_id: read.rater_id.clone(),
                    class_name: label.clone(),
                    x_min: None,
                    y_min: None,
                    x_max: None,
                    y_max: None,
                })
                .map_err(|source| LoadError::Csv {
                    path: path_str.clone(),
                    source,
                })?;
        }
        for (class, b) in &read.findings {
            writer
                .serialize(AnnotationRow {
                    image_id: read.image_id.clone(),
                    rad_id: read.rater_id.clone(),
                    class_name: class.clone(),
                    x_min: Some(b.x_min),
                    y_min: Some(b.y_min),
                    x_max: Some(b.x_max),
                    y_max: Some(b.y_max),
                })
                .map_err(|source| LoadError::Csv {
                    path: path_str.clone(),
                    source,
                })?;
        }
    }
    writer.flush().map_err(|source| LoadError::Io {
        path: path_str,
        source,
    })
}

#[derive(Debug, Clone, Default)]
pub struct Predictions {
    /// label -> per-image scores
    pub global_scores: BTreeMap<String, BTreeMap<String, f64>>,
    pub detections: Vec<DetectionRecord>,
}

fn ingest_prediction_row(
    preds: &mut Predictions,
    row: PredictionRow,
    path: &str,
    line: u64,
    strict: bool,
) -> Result<(), LoadError> {
    let taxonomy = build_label_taxonomy();
    if !(0.0..=1.0).contains(&row.score) {
        return Err(LoadError::ScoreOutOfRange {
            path: path.to_string(),
            line,
            score: row.score,
        });
    }
    let bbox = parse_box(path, line, row.x_min, row.y_min, row.x_max, row.y_max)?;
    let class = row.class_name.trim();
    let kind = match find_label(&taxonomy, class) {
        Some(label) => label.kind,
        None if strict => {
            return Err(LoadError::UnknownClass {
                path: path.to_string(),
                line,
                class: class.to_string(),
            })
        }
        None => {
            if bbox.is_some() {
                LabelKind::Local
            } else {
                LabelKind::Global
            }
        }
    };
    let canonical = find_label(&taxonomy, class)
        .map(|l| l.name.clone())
        .unwrap_or_else(|| class.to_string());
    match (kind, bbox) {
        (LabelKind::Global, None) => {
            preds
                .global_scores
                .entry(canonical)
                .or_default()
                .insert(row.image_id, row.score);
        }
        (LabelKind::Global, Some(_)) => {
            return Err(LoadError::GlobalWithBox {
                path: path.to_string(),
                line,
            })
        }
        (LabelKind::Local, Some(b)) => preds.detections.push(DetectionRecord {
            image_id: row.image_id,
            class: canonical,
            box_: b,
            score: row.score,
        }),
        (LabelKind::Local, None) => {
            return Err(LoadError::LocalWithoutBox {
                path: path.to_string(),
                line,
            })
        }
    }
    Ok(())
}

/// Loads predictions from CSV or JSON-lines (picked by extension: `.jsonl`
/// / `.ndjson` versus anything else as CSV). Both formats carry the same
/// field names and load to identical in-memory predictions.
pub fn load_predictions(path: &Path, strict: bool) -> Result<Predictions, LoadError> {
    let path_str = path.display().to_string();
    let mut preds = Predictions::default();
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase();
    if ext == "jsonl" || ext == "ndjson" {
        let text = std::fs::read_to_string(path).map_err(|source| LoadError::Io {
            path: path_str.clone(),
            source,
        })?;
        for (i, raw) in text.lines().enumerate() {
            let line = i as u64 + 1;
            if raw.trim().is_empty() {
                continue;
            }
            let row: PredictionRow =
                serde_json::from_str(raw).map_err(|e| LoadError::Malformed {
                    path: path_str.clone(),
                    line,
                    reason: e.to_string(),
                })?;
            ingest_prediction_row(&mut preds, row, &path_str, line, strict)?;
        }
    } else {
        let mut reader = csv::Reader::from_path(path).map_err(|source| LoadError::Csv {
            path: path_str.clone(),
            source,
        })?;
        let headers = reader
            .headers()
            .map_err(|source| LoadError::Csv {
                path: path_str.clone(),
                source,
            })?
            .clone();
        for record in reader.records() {
            let record = record.map_err(|source| LoadError::Csv {
                path: path_str.clone(),
                source,
            })?;
            let line = record.position().map_or(0, |p| p.line());
            let row: PredictionRow =
                record
                    .deserialize(Some(&headers))
                    .map_err(|source| LoadError::Csv {
                        path: path_str.clone(),
                        source,
                    })?;
            ingest_prediction_row(&mut preds, row, &path_str, line, strict)?;
        }
    }
    Ok(preds)
}

/// Ground-truth boxes from an annotation file, optionally restricted to a
/// designated ground-truth rater.
pub fn ground_truth_boxes(reads: &[RaterRead], gt_rater: Option<&str>) -> Vec<GroundTruthBox> {
    let mut out = Vec::new();
    for read in reads {
        if let Some(r) = gt_rater {
            if read.rater_id != r {
                continue;
            }
        }
        for (class, b) in &read.findings {
            out.push(GroundTruthBox {
                image_id: read.image_id.clone(),
                class: class.clone(),
                box_: *b,
            });
        }
    }
    out
}

/// Per-label scored sets against consensus truth, covering every image in
/// the truth map. Missing scores are an error listing the image ids.
pub fn scored_sets(
    preds: &Predictions,
    truth: &BTreeMap<String, std::collections::BTreeSet<String>>,
    labels: &[String],
) -> Result<Vec<cxr_core::clf::LabelScores>, String> {
    let mut out = Vec::new();
    for label in labels {
        let scores = preds.global_scores.get(label);
        let mut missing = Vec::new();
        let mut items = Vec::new();
        for (image, positives) in truth {
            match scores.and_then(|m| m.get(image)) {
                Some(&score) => items.push(ScoredItem {
                    unit_id: image.clone(),
                    score,
                    truth: positives.contains(label),
                }),
                None => missing.push(image.clone()),
            }
        }
        if !missing.is_empty() {
            return Err(format!(
                "missing scores for label {label:?} on images: {}",
                missing.join(", ")
            ));
        }
        out.push(cxr_core::clf::LabelScores {
            label: label.clone(),
            data: ScoredLabelSet::new(items).map_err(|e| e.to_string())?,
        });
    }
    Ok(out)
}
