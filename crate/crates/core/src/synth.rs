//! Synthetic data generators used by the test suites and the end-to-end
//! golden run: minimal DICOM files built byte by byte, rating vectors with
//! planted agreement statistics, and score sets with planted AUROC.

use crate::clf::{ScoredItem, ScoredLabelSet};
use crate::model::{RaterRead, Session};
use std::collections::BTreeSet;

/// Hand-assembled DICOM files for golden tests.
pub mod dicom_builder {
    use crate::dicom::{EXPLICIT_VR_LE, TAG_PIXEL_DATA};

    pub const JPEG_LOSSLESS: &str = "1.2.840.10008.1.2.4.70";

    pub struct DicomBuilder {
        rows: u16,
        columns: u16,
        bits_allocated: u16,
        pixel_bytes: Vec<u8>,
        photometric: String,
        window: Option<(f64, f64)>,
        extra: Vec<((u16, u16), [u8; 2], Vec<u8>)>,
        transfer_syntax: String,
        header: bool,
        pixel_data: bool,
    }

    impl DicomBuilder {
        pub fn gray8(rows: u16, columns: u16, values: &[u8]) -> Self {
            assert_eq!(values.len(), rows as usize * columns as usize);
            DicomBuilder {
                rows,
                columns,
                bits_allocated: 8,
                pixel_bytes: values.to_vec(),
                photometric: "MONOCHROME2".to_string(),
                window: None,
                extra: Vec::new(),
                transfer_syntax: EXPLICIT_VR_LE.to_string(),
                header: true,
                pixel_data: true,
            }
        }

        pub fn gray16(rows: u16, columns: u16, values: &[u16]) -> Self {
            assert_eq!(values.len(), rows as usize * columns as usize);
            let mut b = Self::gray8(1, 1, &[0]);
            b.rows = rows;
            b.columns = columns;
            b.bits_allocated = 16;
            b.pixel_bytes = values.iter().flat_map(|v| v.to_le_bytes()).collect();
            b
        }

        pub fn photometric(mut self, value: &str) -> Self {
            self.photometric = value.to_string();
            self
        }

        pub fn window(mut self, center: f64, width: f64) -> Self {
            self.window = Some((center, width));
            self
        }

        pub fn with_string(mut self, tag: (u16, u16), vr: &[u8; 2], value: &str) -> Self {
            self.extra.push((tag, *vr, value.as_bytes().to_vec()));
            self
        }

        pub fn transfer_syntax(mut self, uid: &str) -> Self {
            self.transfer_syntax = uid.to_string();
            self
        }

        pub fn headerless(mut self) -> Self {
            self.header = false;
            self
        }

        pub fn without_pixel_data(mut self) -> Self {
            self.pixel_data = false;
            self
        }

        pub fn build(self) -> Vec<u8> {
            let mut out = Vec::new();
            if self.header {
                out.extend_from_slice(&[0u8; 128]);
                out.extend_from_slice(b"DICM");
                let mut uid = self.transfer_syntax.as_bytes().to_vec();
                if uid.len() % 2 == 1 {
                    uid.push(0);
                }
                write_explicit(&mut out, (0x0002, 0x0010), b"UI", &uid);
            }
            let mut elements: Vec<((u16, u16), [u8; 2], Vec<u8>)> = Vec::new();
            let us = |v: u16| v.to_le_bytes().to_vec();
            let pad = |s: &str| {
                let mut b = s.as_bytes().to_vec();
                if b.len() % 2 == 1 {
                    b.push(b' ');
                }
                b
            };
            elements.push(((0x0028, 0x0004), *b"CS", pad(&self.photometric)));
            elements.push(((0x0028, 0x0010), *b"US", us(self.rows)));
            elements.push(((0x0028, 0x0011), *b"US", us(self.columns)));
            elements.push(((0x0028, 0x0100), *b"US", us(self.bits_allocated)));
            elements.push(((0x0028, 0x0101), *b"US", us(self.bits_allocated)));
            elements.push(((0x0028, 0x0103), *b"US", us(0)));
            if let Some((center, width)) = self.window {
                elements.push(((0x0028, 0x1050), *b"DS", pad(&format!("{center}"))));
                elements.push(((0x0028, 0x1051), *b"DS", pad(&format!("{width}"))));
            }
            for (tag, vr, mut value) in self.extra {
                if value.len() % 2 == 1 {
                    value.push(b' ');
                }
                elements.push((tag, vr, value));
            }
            if self.pixel_data {
                elements.push((TAG_PIXEL_DATA, *b"OB", self.pixel_bytes));
            }
            elements.sort_by_key(|(tag, _, _)| *tag);
            for (tag, vr, value) in elements {
                write_explicit(&mut out, tag, &vr, &value);
            }
            out
        }
    }

    fn write_explicit(out: &mut Vec<u8>, tag: (u16, u16), vr: &[u8; 2], value: &[u8]) {
        out.extend_from_slice(&tag.0.to_le_bytes());
        out.extend_from_slice(&tag.1.to_le_bytes());
        out.extend_from_slice(vr);
        if matches!(vr, b"OB" | b"OW" | b"OF" | b"SQ" | b"UT" | b"UN") {
            out.extend_from_slice(&[0, 0]);
            out.extend_from_slice(&(value.len() as u32).to_le_bytes());
        } else {
            out.extend_from_slice(&(value.len() as u16).to_le_bytes());
        }
        out.extend_from_slice(value);
    }
}

/// Two binary rating vectors realizing the contingency counts
/// (both positive, only a, only b, both negative), together with the
/// kappa value implied by the definitional formula.
pub fn plant_contingency(counts: [usize; 4]) -> (Vec<bool>, Vec<bool>, f64) {
    let [pp, pn, np, nn] = counts;
    let mut a = Vec::new();
    let mut b = Vec::new();
    for (cnt, va, vb) in [
        (pp, true, true),
        (pn, true, false),
        (np, false, true),
        (nn, false, false),
    ] {
        for _ in 0..cnt {
            a.push(va);
            b.push(vb);
        }
    }
    let n = (pp + pn + np + nn) as f64;
    let p_o = (pp + nn) as f64 / n;
    let a_pos = (pp + pn) as f64 / n;
    let b_pos = (pp + np) as f64 / n;
    let p_e = a_pos * b_pos + (1.0 - a_pos) * (1.0 - b_pos);
    let kappa = if (1.0 - p_e).abs() < 1e-12 {
        if p_o >= 1.0 {
            1.0
        } else {
            0.0
        }
    } else {
        (p_o - p_e) / (1.0 - p_e)
    };
    (a, b, kappa)
}

/// Scored items with exactly `discordant` of the pos x neg pairs ranked
/// the wrong way and no ties, so AUROC = 1 - discordant / (pos * neg).
pub fn plant_scores(positives: usize, negatives: usize, discordant: usize) -> (ScoredLabelSet, f64) {
    assert!(positives >= 1 && negatives >= 1);
    assert!(discordant <= positives * negatives);
    // descending-score sequence: start perfectly separated, then move each
    // negative up past enough positives to create the wanted inversions
    let mut sequence: Vec<bool> = Vec::new();
    sequence.extend(std::iter::repeat(true).take(positives));
    sequence.extend(std::iter::repeat(false).take(negatives));
    let mut remaining = discordant;
    for neg in 0..negatives {
        let jump = remaining.min(positives);
        if jump == 0 {
            break;
        }
        let from = positives + neg;
        let to = from - jump;
        let v = sequence.remove(from);
        sequence.insert(to, v);
        remaining -= jump;
    }
    let n = sequence.len();
    let items = sequence
        .into_iter()
        .enumerate()
        .map(|(i, truth)| ScoredItem {
            unit_id: format!("u{i:04}"),
            score: (n - i) as f64 / (n + 1) as f64,
            truth,
        })
        .collect();
    let auroc = 1.0 - discordant as f64 / (positives * negatives) as f64;
    (ScoredLabelSet::new(items).expect("valid planted set"), auroc)
}

/// Rater reads over `image_ids` realizing the given per-pair presence
/// vectors for one global label. `vectors[r][i]` marks image i positive
/// for rater r.
pub fn reads_from_vectors(
    image_ids: &[String],
    rater_ids: &[String],
    label: &str,
    vectors: &[Vec<bool>],
    session: Session,
) -> Vec<RaterRead> {
    assert_eq!(rater_ids.len(), vectors.len());
    let mut reads = Vec::new();
    for (rater, vector) in rater_ids.iter().zip(vectors) {
        assert_eq!(vector.len(), image_ids.len());
        for (image, &present) in image_ids.iter().zip(vector) {
            let mut globals = BTreeSet::new();
            if present {
                globals.insert(label.to_string());
            } else {
                globals.insert("No Finding".to_string());
            }
            reads.push(RaterRead {
                image_id: image.clone(),
                rater_id: rater.clone(),
                session,
                global_labels: globals,
                findings: Vec::new(),
            });
        }
    }
    reads
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agreement::cohen_kappa;
    use crate::clf::auroc;

    #[test]
    fn planted_contingency_matches_formula() {
        let (a, b, planted) = plant_contingency([4, 1, 2, 3]);
        assert!((planted - 0.4).abs() < 1e-15);
        let k = cohen_kappa(&a, &b).unwrap();
        assert!((k.kappa - planted).abs() < 1e-15);
    }

    #[test]
    fn planted_scores_hit_target_auroc() {
        for (p, n, d) in [(3, 3, 0), (3, 3, 9), (5, 4, 7), (10, 10, 33), (2, 7, 5)] {
            let (set, planted) = plant_scores(p, n, d);
            let measured = auroc(&set).unwrap();
            assert!(
                (measured - planted).abs() < 1e-12,
                "p={p} n={n} d={d}: {measured} vs {planted}"
            );
        }
    }
}
