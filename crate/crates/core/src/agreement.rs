//! Inter-rater agreement statistics: percentage agreement, Cohen's and
//! Fleiss' Kappa with Landis-Koch interpretation bands, per-label agreement
//! tables, and the before/after-assistance delta analysis.

use crate::bootstrap::{bootstrap_ci, BootstrapConfig, BootstrapError};
use crate::curve::Interval;
use crate::model::RaterRead;
use crate::scalar::{from_count, Scalar};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AgreementError {
    #[error("rating vectors differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty rating vectors")]
    Empty,
    #[error("unit {unit} has {got} ratings, expected {expected}")]
    RaggedRatings { unit: usize, got: usize, expected: usize },
    #[error("kappa value {0} outside [-1, 1]")]
    OutOfRange(f64),
    #[error("need at least 2 raters, got {0}")]
    TooFewRaters(usize),
    #[error("rater coverage mismatch; missing (rater, image) pairs: {0:?}")]
    CoverageMismatch(Vec<(String, String)>),
    #[error("delta tables have different structure: {0}")]
    StructureMismatch(String),
    #[error(transparent)]
    Bootstrap(#[from] BootstrapError),
}

/// Landis-Koch interpretation bands, in increasing order of agreement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Band {
    Poor,
    NoneToSlight,
    Fair,
    Moderate,
    Substantial,
    AlmostPerfect,
}

/// Maps a kappa value onto its Landis-Koch band. The published ranges
/// leave gaps (0.20 to 0.21 etc.); cuts sit at the midpoints.
pub fn interpret_kappa(value: f64) -> Result<Band, AgreementError> {
    if !(-1.0..=1.0).contains(&value) {
        return Err(AgreementError::OutOfRange(value));
    }
    Ok(if value < 0.0 {
        Band::Poor
    } else if value < 0.205 {
        Band::NoneToSlight
    } else if value < 0.405 {
        Band::Fair
    } else if value < 0.605 {
        Band::Moderate
    } else if value < 0.805 {
        Band::Substantial
    } else {
        Band::AlmostPerfect
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaResult {
    pub kappa: f64,
    pub observed_agreement: f64,
    pub expected_agreement: f64,
    pub ci: Option<Interval>,
    pub band: Band,
    pub degenerate: bool,
}

fn finish_kappa(p_o: f64, p_e: f64, ci: Option<Interval>) -> KappaResult {
    let (kappa, degenerate) = kappa_from_agreements(p_o, p_e);
    KappaResult {
        kappa,
        observed_agreement: p_o,
        expected_agreement: p_e,
        ci,
        band: interpret_kappa(kappa.clamp(-1.0, 1.0)).expect("kappa in range"),
        degenerate,
    }
}

/// Chance-corrected agreement; when expected agreement is 1 the statistic
/// is undefined and the documented convention applies (1 if observed
/// agreement is 1, else 0).
fn kappa_from_agreements(p_o: f64, p_e: f64) -> (f64, bool) {
    if (1.0 - p_e).abs() < 1e-12 {
        ((p_o >= 1.0 - 1e-12) as u8 as f64, true)
    } else {
        ((p_o - p_e) / (1.0 - p_e), false)
    }
}

/// Fraction of positions where the two raters agree.
pub fn percent_agreement(a: &[bool], b: &[bool]) -> Result<f64, AgreementError> {
    if a.len() != b.len() {
        return Err(AgreementError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(AgreementError::Empty);
    }
    let agree = a.iter().zip(b).filter(|(x, y)| x == y).count();
    Ok(agree as f64 / a.len() as f64)
}

/// Observed and expected agreement for two binary raters, generic over the
/// scalar type. Counts are (both positive, only a, only b, both negative).
pub fn cohen_agreements<S: Scalar>(counts: [usize; 4]) -> (S, S) {
    let [pp, pn, np, nn] = counts;
    let n: S = from_count(pp + pn + np + nn);
    let a_pos: S = from_count::<S>(pp + pn) / n.clone();
    let b_pos: S = from_count::<S>(pp + np) / n.clone();
    let p_o = from_count::<S>(pp + nn) / n;
    let p_e = a_pos.clone() * b_pos.clone()
        + (S::one() - a_pos) * (S::one() - b_pos);
    (p_o, p_e)
}

pub fn cohen_kappa(a: &[bool], b: &[bool]) -> Result<KappaResult, AgreementError> {
    let counts = contingency(a, b)?;
    let (p_o, p_e) = cohen_agreements::<f64>(counts);
    Ok(finish_kappa(p_o, p_e, None))
}

fn contingency(a: &[bool], b: &[bool]) -> Result<[usize; 4], AgreementError> {
    if a.len() != b.len() {
        return Err(AgreementError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(AgreementError::Empty);
    }
    let mut counts = [0usize; 4];
    for (&x, &y) in a.iter().zip(b) {
        let idx = match (x, y) {
            (true, true) => 0,
            (true, false) => 1,
            (false, true) => 2,
            (false, false) => 3,
        };
        counts[idx] += 1;
    }
    Ok(counts)
}

/// Mean per-unit and expected agreement for Fleiss' Kappa, generic over
/// the scalar type. Each row holds (positive, negative) rating counts for
/// one unit; every row must sum to `n_raters`.
pub fn fleiss_agreements<S: Scalar>(
    matrix: &[[usize; 2]],
    n_raters: usize,
) -> Result<(S, S), AgreementError> {
    if matrix.is_empty() {
        return Err(AgreementError::Empty);
    }
    if n_raters < 2 {
        return Err(AgreementError::TooFewRaters(n_raters));
    }
    for (unit, row) in matrix.iter().enumerate() {
        if row[0] + row[1] != n_raters {
            return Err(AgreementError::RaggedRatings {
                unit,
                got: row[0] + row[1],
                expected: n_raters,
            });
        }
    }
    let n_units: S = from_count(matrix.len());
    let n: S = from_count(n_raters);
    let denom = n.clone() * (n.clone() - S::one());

    let mut p_bar = S::zero();
    let mut tot = [0usize; 2];
    for row in matrix {
        let sq: S = from_count(row[0] * row[0] + row[1] * row[1]);
        p_bar = p_bar + (sq - n.clone()) / denom.clone();
        tot[0] += row[0];
        tot[1] += row[1];
    }
    p_bar = p_bar / n_units.clone();
    let total: S = n_units * n;
    let mut p_e = S::zero();
    for t in tot {
        let p_j = from_count::<S>(t) / total.clone();
        p_e = p_e + p_j.clone() * p_j;
    }
    Ok((p_bar, p_e))
}

pub fn fleiss_kappa(matrix: &[[usize; 2]], n_raters: usize) -> Result<KappaResult, AgreementError> {
    let (p_bar, p_e) = fleiss_agreements::<f64>(matrix, n_raters)?;
    Ok(finish_kappa(p_bar, p_e, None))
}

/// One label's presence judgments aligned across raters and units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryReadVector {
    pub label: String,
    pub unit_ids: Vec<String>,
    /// rater id -> presence per unit, aligned to `unit_ids`
    pub values: BTreeMap<String, Vec<bool>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairAgreement {
    pub rater_a: String,
    pub rater_b: String,
    pub percent: f64,
    pub kappa: KappaResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelAgreementRow {
    pub label: String,
    pub pairs: Vec<PairAgreement>,
    pub fleiss: Option<KappaResult>,
}

/// Per-label agreement table with a Mean row of arithmetic means of the
/// per-label point values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementTable {
    pub rows: Vec<LabelAgreementRow>,
    pub mean: LabelAgreementRow,
}

/// Groups reads by rater and image, checking that every rater covers the
/// same images.
fn align_reads<'a>(
    reads: &'a [RaterRead],
) -> Result<(Vec<String>, BTreeMap<&'a str, BTreeMap<&'a str, &'a RaterRead>>), AgreementError> {
    let mut by_rater: BTreeMap<&str, BTreeMap<&str, &RaterRead>> = BTreeMap::new();
    let mut all_images: BTreeSet<&str> = BTreeSet::new();
    for r in reads {
        by_rater
            .entry(r.rater_id.as_str())
            .or_default()
            .insert(r.image_id.as_str(), r);
        all_images.insert(r.image_id.as_str());
    }
    let mut missing = Vec::new();
    for (rater, images) in &by_rater {
        for img in &all_images {
            if !images.contains_key(img) {
                missing.push((rater.to_string(), img.to_string()));
            }
        }
    }
    if !missing.is_empty() {
        return Err(AgreementError::CoverageMismatch(missing));
    }
    Ok((all_images.iter().map(|s| s.to_string()).collect(), by_rater))
}

/// Extracts one label's binary presence vectors from aligned reads.
pub fn binarize_label(reads: &[RaterRead], label: &str) -> Result<BinaryReadVector, AgreementError> {
    let (unit_ids, by_rater) = align_reads(reads)?;
    let values = by_rater
        .iter()
        .map(|(rater, images)| {
            let v = unit_ids
                .iter()
                .map(|img| images[img.as_str()].marks(label))
                .collect();
            (rater.to_string(), v)
        })
        .collect();
    Ok(BinaryReadVector {
        label: label.to_string(),
        unit_ids,
        values,
    })
}

fn pair_kappa_with_ci(
    a: &[bool],
    b: &[bool],
    cfg: Option<BootstrapConfig>,
) -> Result<KappaResult, AgreementError> {
    let mut result = cohen_kappa(a, b)?;
    if let Some(cfg) = cfg {
        let ci = bootstrap_ci(
            a.len(),
            result.kappa,
            |idx| {
                let ra: Vec<bool> = idx.iter().map(|&i| a[i]).collect();
                let rb: Vec<bool> = idx.iter().map(|&i| b[i]).collect();
                cohen_kappa(&ra, &rb).ok().map(|k| k.kappa)
            },
            cfg,
        )?;
        result.ci = Some(ci);
    }
    Ok(result)
}

fn fleiss_matrix(vectors: &[&Vec<bool>], unit_count: usize) -> Vec<[usize; 2]> {
    (0..unit_count)
        .map(|u| {
            let pos = vectors.iter().filter(|v| v[u]).count();
            [pos, vectors.len() - pos]
        })
        .collect()
}

fn fleiss_with_ci(
    vectors: &[&Vec<bool>],
    unit_count: usize,
    cfg: Option<BootstrapConfig>,
) -> Result<KappaResult, AgreementError> {
    let matrix = fleiss_matrix(vectors, unit_count);
    let mut result = fleiss_kappa(&matrix, vectors.len())?;
    if let Some(cfg) = cfg {
        let ci = bootstrap_ci(
            unit_count,
            result.kappa,
            |idx| {
                let resampled: Vec<[usize; 2]> = idx.iter().map(|&i| matrix[i]).collect();
                fleiss_kappa(&resampled, vectors.len()).ok().map(|k| k.kappa)
            },
            cfg,
        )?;
        result.ci = Some(ci);
    }
    Ok(result)
}

fn mean_row(rows: &[LabelAgreementRow]) -> LabelAgreementRow {
    let n = rows.len().max(1) as f64;
    let n_pairs = rows.first().map_or(0, |r| r.pairs.len());
    let pairs = (0..n_pairs)
        .map(|pi| {
            let percent = rows.iter().map(|r| r.pairs[pi].percent).sum::<f64>() / n;
            let kappa = rows.iter().map(|r| r.pairs[pi].kappa.kappa).sum::<f64>() / n;
            let p_o = rows
                .iter()
                .map(|r| r.pairs[pi].kappa.observed_agreement)
                .sum::<f64>()
                / n;
            let p_e = rows
                .iter()
                .map(|r| r.pairs[pi].kappa.expected_agreement)
                .sum::<f64>()
                / n;
            PairAgreement {
                rater_a: rows[0].pairs[pi].rater_a.clone(),
                rater_b: rows[0].pairs[pi].rater_b.clone(),
                percent,
                kappa: KappaResult {
                    kappa,
                    observed_agreement: p_o,
                    expected_agreement: p_e,
                    ci: None,
                    band: interpret_kappa(kappa.clamp(-1.0, 1.0)).expect("kappa in range"),
                    degenerate: false,
                },
            }
        })
        .collect();
    let fleiss = if rows.iter().all(|r| r.fleiss.is_some()) && !rows.is_empty() {
        let kappa = rows
            .iter()
            .map(|r| r.fleiss.as_ref().unwrap().kappa)
            .sum::<f64>()
            / n;
        Some(KappaResult {
            kappa,
            observed_agreement: rows
                .iter()
                .map(|r| r.fleiss.as_ref().unwrap().observed_agreement)
                .sum::<f64>()
                / n,
            expected_agreement: rows
                .iter()
                .map(|r| r.fleiss.as_ref().unwrap().expected_agreement)
                .sum::<f64>()
                / n,
            ci: None,
            band: interpret_kappa(kappa.clamp(-1.0, 1.0)).expect("kappa in range"),
            degenerate: false,
        })
    } else {
        None
    };
    LabelAgreementRow {
        label: "Mean".to_string(),
        pairs,
        fleiss,
    }
}

/// Per-label agreement among a group of raters reading the same images:
/// pairwise percent agreement and Cohen's Kappa plus group Fleiss' Kappa,
/// with image-level bootstrap CIs when a config is given.
pub fn agreement_table(
    reads: &[RaterRead],
    labels: &[String],
    cfg: Option<BootstrapConfig>,
) -> Result<AgreementTable, AgreementError> {
    let (unit_ids, by_rater) = align_reads(reads)?;
    if by_rater.len() < 2 {
        return Err(AgreementError::TooFewRaters(by_rater.len()));
    }
    let raters: Vec<&str> = by_rater.keys().copied().collect();
    let mut rows = Vec::new();
    for label in labels {
        let bin = binarize_label(reads, label)?;
        let mut pairs = Vec::new();
        for i in 0..raters.len() {
            for j in (i + 1)..raters.len() {
                let a = &bin.values[raters[i]];
                let b = &bin.values[raters[j]];
                pairs.push(PairAgreement {
                    rater_a: raters[i].to_string(),
                    rater_b: raters[j].to_string(),
                    percent: percent_agreement(a, b)?,
                    kappa: pair_kappa_with_ci(a, b, cfg)?,
                });
            }
        }
        let vectors: Vec<&Vec<bool>> = raters.iter().map(|r| &bin.values[*r]).collect();
        let fleiss = fleiss_with_ci(&vectors, unit_ids.len(), cfg)?;
        rows.push(LabelAgreementRow {
            label: label.clone(),
            pairs,
            fleiss: Some(fleiss),
        });
    }
    let mean = mean_row(&rows);
    Ok(AgreementTable { rows, mean })
}

/// Pairwise agreement between the model (treated as one rater) and each
/// human rater; no group Fleiss column.
pub fn model_vs_rater_table(
    model_reads: &[RaterRead],
    rater_reads: &[RaterRead],
    labels: &[String],
    cfg: Option<BootstrapConfig>,
) -> Result<AgreementTable, AgreementError> {
    let mut combined: Vec<RaterRead> = rater_reads.to_vec();
    combined.extend(model_reads.iter().cloned());
    let model_id: BTreeSet<&str> = model_reads.iter().map(|r| r.rater_id.as_str()).collect();
    let (unit_ids, by_rater) = align_reads(&combined)?;
    let humans: Vec<&str> = by_rater
        .keys()
        .copied()
        .filter(|r| !model_id.contains(r))
        .collect();
    let models: Vec<&str> = by_rater
        .keys()
        .copied()
        .filter(|r| model_id.contains(r))
        .collect();
    if humans.is_empty() || models.is_empty() {
        return Err(AgreementError::TooFewRaters(by_rater.len()));
    }
    let _ = unit_ids;
    let mut rows = Vec::new();
    for label in labels {
        let bin = binarize_label(&combined, label)?;
        let mut pairs = Vec::new();
        for human in &humans {
            for model in &models {
                let a = &bin.values[*human];
                let b = &bin.values[*model];
                pairs.push(PairAgreement {
                    rater_a: human.to_string(),
                    rater_b: model.to_string(),
                    percent: percent_agreement(a, b)?,
                    kappa: pair_kappa_with_ci(a, b, cfg)?,
                });
            }
        }
        rows.push(LabelAgreementRow {
            label: label.clone(),
            pairs,
            fleiss: None,
        });
    }
    let mean = mean_row(&rows);
    Ok(AgreementTable { rows, mean })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelDelta {
    pub label: String,
    /// Kappa deltas in percentage points, one per rater pair.
    pub pair_deltas: Vec<(String, String, f64)>,
    pub fleiss_delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaReport {
    pub rows: Vec<LabelDelta>,
    pub mean_pair_delta: Option<f64>,
    pub mean_fleiss_delta: Option<f64>,
}

/// Per-cell kappa change (after minus before) in percentage points, with
/// means over pair cells and over Fleiss cells.
pub fn reader_study_delta(
    before: &AgreementTable,
    after: &AgreementTable,
) -> Result<DeltaReport, AgreementError> {
    if before.rows.len() != after.rows.len() {
        return Err(AgreementError::StructureMismatch(format!(
            "{} vs {} label rows",
            before.rows.len(),
            after.rows.len()
        )));
    }
    let mut rows = Vec::new();
    let mut pair_deltas = Vec::new();
    let mut fleiss_deltas = Vec::new();
    for (b, a) in before.rows.iter().zip(&after.rows) {
        if b.label != a.label || b.pairs.len() != a.pairs.len() {
            return Err(AgreementError::StructureMismatch(format!(
                "row {:?} vs {:?}",
                b.label, a.label
            )));
        }
        let mut deltas = Vec::new();
        for (pb, pa) in b.pairs.iter().zip(&a.pairs) {
            let d = (pa.kappa.kappa - pb.kappa.kappa) * 100.0;
            deltas.push((pb.rater_a.clone(), pb.rater_b.clone(), d));
            pair_deltas.push(d);
        }
        let fleiss_delta = match (&b.fleiss, &a.fleiss) {
            (Some(fb), Some(fa)) => {
                let d = (fa.kappa - fb.kappa) * 100.0;
                fleiss_deltas.push(d);
                Some(d)
            }
            _ => None,
        };
        rows.push(LabelDelta {
            label: b.label.clone(),
            pair_deltas: deltas,
            fleiss_delta,
        });
    }
    let mean = |v: &[f64]| {
        if v.is_empty() {
            None
        } else {
            Some(v.iter().sum::<f64>() / v.len() as f64)
        }
    };
    Ok(DeltaReport {
        mean_pair_delta: mean(&pair_deltas),
        mean_fleiss_delta: mean(&fleiss_deltas),
        rows,
    })
}

/// Mean kappa change in percentage points between paired before/after
/// values, e.g. the mean rows of published site tables.
pub fn mean_delta_points(before: &[f64], after: &[f64]) -> Result<f64, AgreementError> {
    if before.len() != after.len() {
        return Err(AgreementError::LengthMismatch(before.len(), after.len()));
    }
    if before.is_empty() {
        return Err(AgreementError::Empty);
    }
    let sum: f64 = before
        .iter()
        .zip(after)
        .map(|(b, a)| (a - b) * 100.0)
        .sum();
    Ok(sum / before.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Session;

    #[test]
    fn percent_agreement_fixtures() {
        let a = vec![true, false, true];
        assert_eq!(percent_agreement(&a, &a).unwrap(), 1.0);
        let comp: Vec<bool> = a.iter().map(|v| !v).collect();
        assert_eq!(percent_agreement(&a, &comp).unwrap(), 0.0);
        let x = vec![true, true, true, true, true, false, false, false, false, false];
        let y = vec![true, true, true, true, false, true, false, false, false, true];
        assert_eq!(percent_agreement(&x, &y).unwrap(), 0.7);
        assert!(percent_agreement(&a, &x).is_err());
    }

    #[test]
    fn cohen_kappa_hand_fixture() {
        // both+ = 4, A+B- = 1, A-B+ = 2, both- = 3
        let mut a = Vec::new();
        let mut b = Vec::new();
        for _ in 0..4 {
            a.push(true);
            b.push(true);
        }
        a.push(true);
        b.push(false);
        for _ in 0..2 {
            a.push(false);
            b.push(true);
        }
        for _ in 0..3 {
            a.push(false);
            b.push(false);
        }
        let k = cohen_kappa(&a, &b).unwrap();
        assert!((k.observed_agreement - 0.7).abs() < 1e-15);
        assert!((k.expected_agreement - 0.5).abs() < 1e-15);
        assert!((k.kappa - 0.4).abs() < 1e-15);
        assert!(!k.degenerate);
        // symmetric in its raters
        let swapped = cohen_kappa(&b, &a).unwrap();
        assert_eq!(swapped.kappa, k.kappa);
        // invariant under flipping both category labelings
        let na: Vec<bool> = a.iter().map(|v| !v).collect();
        let nb: Vec<bool> = b.iter().map(|v| !v).collect();
        let flipped = cohen_kappa(&na, &nb).unwrap();
        assert!((flipped.kappa - k.kappa).abs() < 1e-15);
    }

    #[test]
    fn cohen_kappa_identity_and_zero() {
        let a = vec![true, false, true, false];
        let k = cohen_kappa(&a, &a).unwrap();
        assert_eq!(k.kappa, 1.0);
        // p_o == p_e by construction: A marks half at random positions
        let x = vec![true, true, false, false];
        let y = vec![true, false, true, false];
        let k = cohen_kappa(&x, &y).unwrap();
        assert!((k.kappa).abs() < 1e-15);
    }

    #[test]
    fn cohen_kappa_degenerate_marginals() {
        let a = vec![true, true, true];
        let k = cohen_kappa(&a, &a).unwrap();
        assert!(k.degenerate);
        assert_eq!(k.kappa, 1.0);
        let b = vec![false, false, false];
        let k = cohen_kappa(&a, &b).unwrap();
        assert!(!k.degenerate); // marginals differ, p_e = 0
        assert_eq!(k.kappa, 0.0);
    }

    #[test]
    fn fleiss_kappa_hand_fixture() {
        // N=2, n=3: unit1 all positive, unit2 two positive / one negative
        let matrix = vec![[3, 0], [2, 1]];
        let k = fleiss_kappa(&matrix, 3).unwrap();
        assert!((k.observed_agreement - 2.0 / 3.0).abs() < 1e-15);
        assert!((k.expected_agreement - 13.0 / 18.0).abs() < 1e-15);
        assert!((k.kappa + 0.2).abs() < 1e-12);
    }

    #[test]
    fn fleiss_kappa_perfect_and_split() {
        let matrix = vec![[3, 0], [0, 3]];
        assert_eq!(fleiss_kappa(&matrix, 3).unwrap().kappa, 1.0);
        // every unit evenly split with n = 2
        let split = vec![[1, 1], [1, 1], [1, 1], [1, 1]];
        assert!(fleiss_kappa(&split, 2).unwrap().kappa < 0.0);
    }

    #[test]
    fn fleiss_kappa_ragged_rejected() {
        let matrix = vec![[3, 0], [1, 1]];
        assert_eq!(
            fleiss_kappa(&matrix, 3).unwrap_err(),
            AgreementError::RaggedRatings {
                unit: 1,
                got: 2,
                expected: 3
            }
        );
    }

    #[test]
    fn fleiss_unit_permutation_invariant() {
        let matrix = vec![[3, 0], [2, 1], [1, 2], [0, 3]];
        let mut rev = matrix.clone();
        rev.reverse();
        assert_eq!(
            fleiss_kappa(&matrix, 3).unwrap().kappa,
            fleiss_kappa(&rev, 3).unwrap().kappa
        );
    }

    #[test]
    fn interpret_kappa_bands() {
        assert_eq!(interpret_kappa(0.529).unwrap(), Band::Moderate);
        assert_eq!(interpret_kappa(1.0).unwrap(), Band::AlmostPerfect);
        assert_eq!(interpret_kappa(-0.1).unwrap(), Band::Poor);
        assert_eq!(interpret_kappa(0.0).unwrap(), Band::NoneToSlight);
        assert_eq!(interpret_kappa(0.205).unwrap(), Band::Fair);
        assert!(interpret_kappa(1.5).is_err());
        // monotone over a sweep
        let mut last = Band::Poor;
        for i in 0..=200 {
            let v = -1.0 + i as f64 / 100.0;
            let band = interpret_kappa(v).unwrap();
            assert!(band >= last);
            last = band;
        }
    }

    fn read(image: &str, rater: &str, labels: &[&str]) -> RaterRead {
        RaterRead {
            image_id: image.to_string(),
            rater_id: rater.to_string(),
            session: Session::Unassisted,
            global_labels: labels.iter().map(|s| s.to_string()).collect(),
            findings: Vec::new(),
        }
    }

    #[test]
    fn agreement_table_identical_raters() {
        let mut reads = Vec::new();
        for rater in ["r1", "r2", "r3"] {
            reads.push(read("a", rater, &["Pneumonia"]));
            reads.push(read("b", rater, &[]));
        }
        let labels = vec!["Pneumonia".to_string()];
        let table = agreement_table(&reads, &labels, None).unwrap();
        for pair in &table.rows[0].pairs {
            assert_eq!(pair.percent, 1.0);
            assert_eq!(pair.kappa.kappa, 1.0);
        }
        assert_eq!(table.rows[0].fleiss.as_ref().unwrap().kappa, 1.0);
    }

    #[test]
    fn agreement_table_coverage_mismatch() {
        let reads = vec![
            read("a", "r1", &[]),
            read("b", "r1", &[]),
            read("a", "r2", &[]),
        ];
        let err = agreement_table(&reads, &["Pneumonia".to_string()], None).unwrap_err();
        assert_eq!(
            err,
            AgreementError::CoverageMismatch(vec![("r2".to_string(), "b".to_string())])
        );
    }

    #[test]
    fn two_rater_fleiss_equals_hand_computation() {
        // N=4 units, 2 raters; Fleiss with n=2 equals Scott's pi, not
        // Cohen's kappa. Hand computation: rows (2,0),(0,2),(1,1),(2,0).
        let matrix = vec![[2, 0], [0, 2], [1, 1], [2, 0]];
        let k = fleiss_kappa(&matrix, 2).unwrap();
        // P_i = 1,1,0,1 -> P_bar = 3/4; p_pos = 5/8 -> P_e = 25/64 + 9/64 = 17/32
        assert!((k.observed_agreement - 0.75).abs() < 1e-15);
        assert!((k.expected_agreement - 17.0 / 32.0).abs() < 1e-15);
        assert!((k.kappa - (0.75 - 17.0 / 32.0) / (1.0 - 17.0 / 32.0)).abs() < 1e-15);
    }

    #[test]
    fn model_vs_rater_identical_pair() {
        let mut reads = Vec::new();
        for img in ["a", "b", "c"] {
            reads.push(read(img, "r1", if img == "a" { &["Pneumonia"] } else { &[] }));
        }
        let model: Vec<RaterRead> = reads
            .iter()
            .map(|r| {
                let mut m = r.clone();
                m.rater_id = "AI".to_string();
                m.session = Session::Model;
                m
            })
            .collect();
        let table =
            model_vs_rater_table(&model, &reads, &["Pneumonia".to_string()], None).unwrap();
        assert_eq!(table.rows[0].pairs.len(), 1);
        assert_eq!(table.rows[0].pairs[0].kappa.kappa, 1.0);
        assert!(table.rows[0].fleiss.is_none());
    }

    #[test]
    fn delta_report_fixtures() {
        assert!(
            (mean_delta_points(&[0.404, 0.529], &[0.418, 0.545]).unwrap() - 1.5).abs() < 1e-12
        );
        let before = [0.494, 0.506, 0.462, 0.337, 0.459, 0.330];
        let after = [0.546, 0.524, 0.527, 0.350, 0.479, 0.358];
        let d = mean_delta_points(&before, &after).unwrap();
        assert!((d - 3.3).abs() < 0.05);
    }

    #[test]
    fn reader_study_delta_zero_when_unchanged() {
        let mut reads = Vec::new();
        for rater in ["r1", "r2"] {
            reads.push(read("a", rater, &["Pneumonia"]));
            reads.push(read("b", rater, &[]));
        }
        let labels = vec!["Pneumonia".to_string()];
        let table = agreement_table(&reads, &labels, None).unwrap();
        let delta = reader_study_delta(&table, &table).unwrap();
        assert_eq!(delta.mean_pair_delta, Some(0.0));
        assert_eq!(delta.mean_fleiss_delta, Some(0.0));
        assert!(delta.rows[0].pair_deltas.iter().all(|(_, _, d)| *d == 0.0));
    }
}
