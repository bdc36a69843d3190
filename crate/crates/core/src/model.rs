//! Label taxonomy, study/read data model, and consensus ground-truth
//! construction shared by all other modules.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

/// Whether a label is an image-level impression or a boxed finding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelKind {
    Global,
    Local,
}

/// One entry of the 28-label taxonomy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelClass {
    pub name: String,
    pub kind: LabelKind,
    pub trainable: bool,
}

impl LabelClass {
    fn new(name: &str, kind: LabelKind, trainable: bool) -> Self {
        LabelClass {
            name: name.to_string(),
            kind,
            trainable,
        }
    }
}

/// Local labels excluded from modeling due to scarce positives.
const NON_TRAINABLE_LOCAL: [&str; 8] = [
    "Clavicle Fracture",
    "Edema",
    "Emphysema",
    "Enlarged PA",
    "Lung Cavity",
    "Lung Cyst",
    "Mediastinal Shift",
    "Rib Fracture",
];

const LOCAL_LABELS: [&str; 22] = [
    "Aortic Enlargement",
    "Atelectasis",
    "Cardiomegaly",
    "Calcification",
    "Clavicle Fracture",
    "Consolidation",
    "Edema",
    "Emphysema",
    "Enlarged PA",
    "ILD",
    "Infiltration",
    "Lung Cavity",
    "Lung Cyst",
    "Lung Opacity",
    "Mediastinal Shift",
    "Nodule/Mass",
    "Pulmonary Fibrosis",
    "Pneumothorax",
    "Pleural Thickening",
    "Pleural Effusion",
    "Rib Fracture",
    "Other Lesions",
];

const GLOBAL_LABELS: [&str; 6] = [
    "Lung Tumor",
    "Pneumonia",
    "Tuberculosis",
    "Other Diseases",
    "COPD",
    "No Finding",
];

pub const NO_FINDING: &str = "No Finding";

/// Builds the 28-label taxonomy: 22 local + 6 global, with trainability
/// flags set (COPD and eight rare local findings are non-trainable).
pub fn build_label_taxonomy() -> Vec<LabelClass> {
    let mut out = Vec::with_capacity(28);
    for name in LOCAL_LABELS {
        let trainable = !NON_TRAINABLE_LOCAL.contains(&name);
        out.push(LabelClass::new(name, LabelKind::Local, trainable));
    }
    for name in GLOBAL_LABELS {
        out.push(LabelClass::new(name, LabelKind::Global, name != "COPD"));
    }
    out
}

/// Case-insensitive lookup into the taxonomy.
pub fn find_label<'a>(taxonomy: &'a [LabelClass], name: &str) -> Option<&'a LabelClass> {
    taxonomy
        .iter()
        .find(|l| l.name.eq_ignore_ascii_case(name.trim()))
}

/// Axis-aligned bounding box in the original image frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self, ModelError> {
        let b = BBox {
            x_min,
            y_min,
            x_max,
            y_max,
        };
        let finite = [x_min, y_min, x_max, y_max].iter().all(|v| v.is_finite());
        if !finite || x_min < 0.0 || y_min < 0.0 || x_min >= x_max || y_min >= y_max {
            return Err(ModelError::InvalidBox {
                x_min,
                y_min,
                x_max,
                y_max,
            });
        }
        Ok(b)
    }

    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min) * (self.y_max - self.y_min)
    }
}

/// Reading session in the reader study, or the model itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Session {
    Unassisted,
    Assisted,
    Model,
}

/// One reader's (or the model's) labels for a single image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaterRead {
    pub image_id: String,
    pub rater_id: String,
    pub session: Session,
    pub global_labels: BTreeSet<String>,
    pub findings: Vec<(String, BBox)>,
}

impl RaterRead {
    /// True when the read marks `label` as present, either as a global
    /// label or as at least one boxed finding of that class.
    pub fn marks(&self, label: &str) -> bool {
        self.global_labels.iter().any(|g| g == label)
            || self.findings.iter().any(|(c, _)| c == label)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRecord {
    pub study_id: String,
    pub image_ids: Vec<String>,
    pub reads: Vec<RaterRead>,
    pub metadata: Option<StudyMetadata>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyMetadata {
    pub age_years: Option<f64>,
    pub sex: Option<String>,
    pub source: Option<String>,
}

/// Majority-vote consensus configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsensusPolicy {
    pub quorum: usize,
}

impl ConsensusPolicy {
    pub fn majority(quorum: usize) -> Result<Self, ModelError> {
        if quorum < 1 || quorum % 2 == 0 {
            return Err(ModelError::BadQuorum(quorum));
        }
        Ok(ConsensusPolicy { quorum })
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("invalid box ({x_min}, {y_min}, {x_max}, {y_max})")]
    InvalidBox {
        x_min: f64,
        y_min: f64,
        x_max: f64,
        y_max: f64,
    },
    #[error("majority quorum must be odd and >= 1, got {0}")]
    BadQuorum(usize),
    #[error("reads cover different images: {0:?}")]
    MixedImages(Vec<String>),
    #[error("duplicate rater id {0}")]
    DuplicateRater(String),
    #[error("expected {expected} distinct raters, got {got}")]
    QuorumMismatch { expected: usize, got: usize },
    #[error("unknown label {0:?}")]
    UnknownLabel(String),
}

/// Majority vote over the global labels of one image's reads.
///
/// A label survives iff strictly more than quorum/2 raters marked it.
/// Disease majorities win over a No Finding majority; No Finding is
/// emitted only when no disease label survives.
pub fn consensus_global(
    reads: &[RaterRead],
    policy: ConsensusPolicy,
) -> Result<BTreeSet<String>, ModelError> {
    let images: BTreeSet<_> = reads.iter().map(|r| r.image_id.clone()).collect();
    if images.len() > 1 {
        return Err(ModelError::MixedImages(images.into_iter().collect()));
    }
    let mut raters = BTreeSet::new();
    for r in reads {
        if !raters.insert(r.rater_id.as_str()) {
            return Err(ModelError::DuplicateRater(r.rater_id.clone()));
        }
    }
    if raters.len() != policy.quorum {
        return Err(ModelError::QuorumMismatch {
            expected: policy.quorum,
            got: raters.len(),
        });
    }

    let mut votes: BTreeMap<&str, usize> = BTreeMap::new();
    for r in reads {
        for label in &r.global_labels {
            *votes.entry(label.as_str()).or_default() += 1;
        }
    }
    let needed = policy.quorum / 2 + 1;
    let mut out: BTreeSet<String> = votes
        .iter()
        .filter(|&(label, &n)| *label != NO_FINDING && n >= needed)
        .map(|(label, _)| label.to_string())
        .collect();
    if out.is_empty() && votes.get(NO_FINDING).copied().unwrap_or(0) >= needed {
        out.insert(NO_FINDING.to_string());
    }
    Ok(out)
}

/// Checks a read against the taxonomy and model invariants; returns one
/// human-readable violation per broken rule (an empty list means valid).
pub fn validate_read(read: &RaterRead, taxonomy: &[LabelClass]) -> Vec<String> {
    let mut violations = Vec::new();
    let no_finding = read.global_labels.iter().any(|g| g == NO_FINDING);
    if no_finding && !read.findings.is_empty() {
        violations.push("global_labels: No Finding excludes findings".to_string());
    }
    if no_finding && read.global_labels.len() > 1 {
        violations.push("global_labels: No Finding excludes other global labels".to_string());
    }
    for g in &read.global_labels {
        match find_label(taxonomy, g) {
            None => violations.push(format!("global_labels: unknown label {g:?}")),
            Some(l) if l.kind != LabelKind::Global => {
                violations.push(format!("global_labels: {g:?} is a local label"))
            }
            _ => {}
        }
    }
    for (c, _) in &read.findings {
        match find_label(taxonomy, c) {
            None => violations.push(format!("findings: unknown label {c:?}")),
            Some(l) if l.kind != LabelKind::Local => {
                violations.push(format!("findings: {c:?} is a global label"))
            }
            _ => {}
        }
    }
    violations
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read(image: &str, rater: &str, globals: &[&str]) -> RaterRead {
        RaterRead {
            image_id: image.to_string(),
            rater_id: rater.to_string(),
            session: Session::Unassisted,
            global_labels: globals.iter().map(|s| s.to_string()).collect(),
            findings: Vec::new(),
        }
    }

    #[test]
    fn taxonomy_counts_and_flags() {
        let tax = build_label_taxonomy();
        assert_eq!(tax.len(), 28);
        assert_eq!(
            tax.iter().filter(|l| l.kind == LabelKind::Global).count(),
            6
        );
        assert_eq!(tax.iter().filter(|l| l.kind == LabelKind::Local).count(), 22);

        let aortic = find_label(&tax, "Aortic Enlargement").unwrap();
        assert_eq!(aortic.kind, LabelKind::Local);
        assert!(aortic.trainable);

        let copd = find_label(&tax, "COPD").unwrap();
        assert_eq!(copd.kind, LabelKind::Global);
        assert!(!copd.trainable);

        for name in NON_TRAINABLE_LOCAL {
            assert!(!find_label(&tax, name).unwrap().trainable, "{name}");
        }
        // 14 detection classes remain trainable among local labels
        assert_eq!(
            tax.iter()
                .filter(|l| l.kind == LabelKind::Local && l.trainable)
                .count(),
            14
        );
    }

    #[test]
    fn consensus_majority_two_of_three() {
        let policy = ConsensusPolicy::majority(3).unwrap();
        let reads = vec![
            read("img", "r1", &["Pneumonia"]),
            read("img", "r2", &["Pneumonia"]),
            read("img", "r3", &[]),
        ];
        let out = consensus_global(&reads, policy).unwrap();
        assert_eq!(out.into_iter().collect::<Vec<_>>(), vec!["Pneumonia"]);
    }

    #[test]
    fn consensus_unanimous_no_finding() {
        let policy = ConsensusPolicy::majority(3).unwrap();
        let reads = vec![
            read("img", "r1", &["No Finding"]),
            read("img", "r2", &["No Finding"]),
            read("img", "r3", &["No Finding"]),
        ];
        let out = consensus_global(&reads, policy).unwrap();
        assert_eq!(out.into_iter().collect::<Vec<_>>(), vec!["No Finding"]);
    }

    #[test]
    fn consensus_five_raters_majority_only() {
        // Tuberculosis 2/5 (minority), Pneumonia 3/5 (majority).
        let policy = ConsensusPolicy::majority(5).unwrap();
        let reads = vec![
            read("img", "r1", &["Tuberculosis", "Pneumonia"]),
            read("img", "r2", &["Tuberculosis"]),
            read("img", "r3", &["Pneumonia"]),
            read("img", "r4", &["Pneumonia"]),
            read("img", "r5", &[]),
        ];
        let out = consensus_global(&reads, policy).unwrap();
        assert_eq!(out.into_iter().collect::<Vec<_>>(), vec!["Pneumonia"]);
    }

    #[test]
    fn consensus_rejects_mixed_images_and_duplicate_raters() {
        let policy = ConsensusPolicy::majority(3).unwrap();
        let mixed = vec![
            read("a", "r1", &[]),
            read("b", "r2", &[]),
            read("a", "r3", &[]),
        ];
        assert!(matches!(
            consensus_global(&mixed, policy),
            Err(ModelError::MixedImages(_))
        ));
        let dup = vec![
            read("a", "r1", &[]),
            read("a", "r1", &[]),
            read("a", "r3", &[]),
        ];
        assert!(matches!(
            consensus_global(&dup, policy),
            Err(ModelError::DuplicateRater(_))
        ));
    }

    #[test]
    fn consensus_disease_majority_beats_no_finding() {
        let policy = ConsensusPolicy::majority(5).unwrap();
        let reads = vec![
            read("img", "r1", &["Pneumonia"]),
            read("img", "r2", &["Pneumonia"]),
            read("img", "r3", &["Pneumonia"]),
            read("img", "r4", &["No Finding"]),
            read("img", "r5", &["No Finding"]),
        ];
        let out = consensus_global(&reads, policy).unwrap();
        assert_eq!(out.into_iter().collect::<Vec<_>>(), vec!["Pneumonia"]);
    }

    #[test]
    fn consensus_permutation_invariant_and_decisive() {
        // exhaustive over all vote patterns for one label at quorum 3 and 5
        let tax_label = "Pneumonia";
        for quorum in [3usize, 5] {
            let policy = ConsensusPolicy::majority(quorum).unwrap();
            for pattern in 0u32..(1 << quorum) {
                let reads: Vec<RaterRead> = (0..quorum)
                    .map(|i| {
                        let marks = pattern >> i & 1 == 1;
                        let labels: &[&str] = if marks { &[tax_label] } else { &[] };
                        read("img", &format!("r{i}"), labels)
                    })
                    .collect();
                let out = consensus_global(&reads, policy).unwrap();
                let votes = pattern.count_ones() as usize;
                // decisively in or out, never a tie
                assert_eq!(out.contains(tax_label), votes > quorum / 2);
                // permutation invariance
                let mut rev = reads.clone();
                rev.reverse();
                assert_eq!(consensus_global(&rev, policy).unwrap(), out);
            }
        }
    }

    #[test]
    fn validate_read_flags_violations() {
        let tax = build_label_taxonomy();
        let bad = RaterRead {
            image_id: "img".to_string(),
            rater_id: "r1".to_string(),
            session: Session::Unassisted,
            global_labels: ["No Finding".to_string()].into(),
            findings: vec![(
                "Cardiomegaly".to_string(),
                BBox::new(0.0, 0.0, 1.0, 1.0).unwrap(),
            )],
        };
        let violations = validate_read(&bad, &tax);
        assert_eq!(violations.len(), 1);
        assert!(violations[0].contains("No Finding excludes findings"));

        let kind_mismatch = RaterRead {
            image_id: "img".to_string(),
            rater_id: "r1".to_string(),
            session: Session::Unassisted,
            global_labels: BTreeSet::new(),
            findings: vec![(
                "Pneumonia".to_string(),
                BBox::new(0.0, 0.0, 1.0, 1.0).unwrap(),
            )],
        };
        let violations = validate_read(&kind_mismatch, &tax);
        assert_eq!(violations.len(), 1);
        assert!(violations[0].contains("global label"));

        let ok = read("img", "r1", &["Pneumonia"]);
        assert!(validate_read(&ok, &tax).is_empty());
    }

    #[test]
    fn bbox_rejects_degenerate() {
        assert!(BBox::new(0.0, 0.0, 0.0, 1.0).is_err());
        assert!(BBox::new(-1.0, 0.0, 1.0, 1.0).is_err());
        assert!(BBox::new(0.0, 0.0, f64::NAN, 1.0).is_err());
        assert!(BBox::new(2.0, 3.0, 10.0, 8.0).is_ok());
    }
}
