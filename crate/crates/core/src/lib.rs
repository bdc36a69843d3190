//! Evaluation toolkit for chest X-ray studies operating on annotation and
//! prediction files: label taxonomy and consensus ground truth, DICOM
//! ingestion and preprocessing, ROC/AUROC with bootstrap confidence
//! intervals, FROC lesion-localization analysis, and inter-rater agreement
//! statistics.

pub mod agreement;
pub mod bootstrap;
pub mod clf;
pub mod curve;
pub mod det;
pub mod dicom;
pub mod model;
pub mod pixels;
pub mod scalar;
pub mod synth;

pub use curve::{CurveKind, CurveSeries, Interval};
pub use model::{BBox, ConsensusPolicy, LabelClass, LabelKind, RaterRead, Session, StudyRecord};
pub use scalar::{Real, Scalar};
