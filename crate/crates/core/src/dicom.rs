//! Minimal DICOM parser for uncompressed little-endian transfer syntaxes,
//! plus PHI removal.
//!
//! Scope is bounded on purpose: explicit and implicit VR little endian,
//! single-frame uncompressed pixel data. Compressed syntaxes are rejected
//! with the offending UID, never silently decoded.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

pub const IMPLICIT_VR_LE: &str = "1.2.840.10008.1.2";
pub const EXPLICIT_VR_LE: &str = "1.2.840.10008.1.2.1";

pub type Tag = (u16, u16);

pub const TAG_TRANSFER_SYNTAX: Tag = (0x0002, 0x0010);
pub const TAG_ROWS: Tag = (0x0028, 0x0010);
pub const TAG_COLUMNS: Tag = (0x0028, 0x0011);
pub const TAG_BITS_ALLOCATED: Tag = (0x0028, 0x0100);
pub const TAG_BITS_STORED: Tag = (0x0028, 0x0101);
pub const TAG_PIXEL_REPRESENTATION: Tag = (0x0028, 0x0103);
pub const TAG_PHOTOMETRIC: Tag = (0x0028, 0x0004);
pub const TAG_RESCALE_INTERCEPT: Tag = (0x0028, 0x1052);
pub const TAG_RESCALE_SLOPE: Tag = (0x0028, 0x1053);
pub const TAG_WINDOW_CENTER: Tag = (0x0028, 0x1050);
pub const TAG_WINDOW_WIDTH: Tag = (0x0028, 0x1051);
pub const TAG_PIXEL_DATA: Tag = (0x7FE0, 0x0010);

/// PHI tags deleted by [`deidentify`]. PatientAge and PatientSex are kept
/// since they feed the demographic analysis.
pub const DEID_BLACKLIST: [Tag; 11] = [
    (0x0010, 0x0010), // PatientName
    (0x0010, 0x0020), // PatientID
    (0x0010, 0x0030), // PatientBirthDate
    (0x0010, 0x1000), // OtherPatientIDs
    (0x0010, 0x1040), // PatientAddress
    (0x0008, 0x0090), // ReferringPhysicianName
    (0x0008, 0x0080), // InstitutionName
    (0x0008, 0x0081), // InstitutionAddress
    (0x0008, 0x0050), // AccessionNumber
    (0x0008, 0x1010), // StationName
    (0x0008, 0x1070), // OperatorsName
];

#[derive(Debug, Error, PartialEq)]
pub enum DicomError {
    #[error("unsupported encoding: transfer syntax {0}")]
    UnsupportedEncoding(String),
    #[error("truncated value field at byte offset {0}")]
    Truncated(usize),
    #[error("undefined-length element at byte offset {0} not supported")]
    UndefinedLength(usize),
    #[error("no pixel data (7FE0,0010)")]
    NoPixelData,
    #[error("missing tag ({0:04X},{1:04X})")]
    MissingTag(u16, u16),
    #[error("invalid pixel descriptor: {0}")]
    BadDescriptor(String),
    #[error("degenerate window (width {0})")]
    DegenerateWindow(f64),
    #[error("input too short to be a DICOM dataset")]
    TooShort,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransferSyntax {
    ExplicitVrLittleEndian,
    ImplicitVrLittleEndian,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Element {
    /// Two-letter VR code when known (explicit VR or inferred).
    pub vr: Option<[u8; 2]>,
    pub value: Vec<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Photometric {
    Monochrome1,
    Monochrome2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PixelDescriptor {
    pub rows: u16,
    pub columns: u16,
    pub bits_allocated: u16,
    pub bits_stored: u16,
    pub signed: bool,
    pub photometric: Photometric,
    pub rescale_slope: f64,
    pub rescale_intercept: f64,
    pub window_center: Option<f64>,
    pub window_width: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DicomObject {
    pub transfer_syntax: TransferSyntax,
    pub tags: BTreeMap<Tag, Element>,
    pub descriptor: PixelDescriptor,
}

impl DicomObject {
    pub fn pixel_data(&self) -> Result<&[u8], DicomError> {
        self.tags
            .get(&TAG_PIXEL_DATA)
            .map(|e| e.value.as_slice())
            .ok_or(DicomError::NoPixelData)
    }

    pub fn string_value(&self, tag: Tag) -> Option<String> {
        self.tags
            .get(&tag)
            .map(|e| String::from_utf8_lossy(&e.value).trim_end_matches(['\0', ' ']).to_string())
    }
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], DicomError> {
        if self.remaining() < n {
            return Err(DicomError::Truncated(self.pos));
        }
        let out = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u16(&mut self) -> Result<u16, DicomError> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32, DicomError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// VRs that use the 2-byte-reserved + 4-byte-length explicit form.
fn is_long_vr(vr: &[u8; 2]) -> bool {
    matches!(vr, b"OB" | b"OW" | b"OF" | b"SQ" | b"UT" | b"UN")
}

fn looks_like_vr(b: &[u8]) -> bool {
    const KNOWN: [&[u8; 2]; 27] = [
        b"AE", b"AS", b"AT", b"CS", b"DA", b"DS", b"DT", b"FL", b"FD", b"IS", b"LO", b"LT",
        b"OB", b"OF", b"OW", b"PN", b"SH", b"SL", b"SQ", b"SS", b"ST", b"TM", b"UI", b"UL",
        b"UN", b"US", b"UT",
    ];
    KNOWN.iter().any(|k| &b[..2] == k.as_slice())
}

fn read_element(
    cur: &mut Cursor,
    explicit: bool,
) -> Result<(Tag, Element), DicomError> {
    let group = cur.u16()?;
    let element = cur.u16()?;
    let (vr, len) = if explicit {
        let vr_bytes = cur.take(2)?;
        let vr = [vr_bytes[0], vr_bytes[1]];
        if is_long_vr(&vr) {
            cur.take(2)?;
            (Some(vr), cur.u32()? as usize)
        } else {
            (Some(vr), cur.u16()? as usize)
        }
    } else {
        (None, cur.u32()? as usize)
    };
    if len == 0xFFFF_FFFF {
        return Err(DicomError::UndefinedLength(cur.pos));
    }
    let value = cur.take(len)?.to_vec();
    Ok(((group, element), Element { vr, value }))
}

/// Parses a DICOM Part-10 file or a headerless dataset. Only uncompressed
/// little-endian transfer syntaxes are accepted.
pub fn parse_dicom(bytes: &[u8]) -> Result<DicomObject, DicomError> {
    if bytes.len() < 8 {
        return Err(DicomError::TooShort);
    }
    let mut tags: BTreeMap<Tag, Element> = BTreeMap::new();
    let syntax;

    let mut cur = if bytes.len() > 132 && &bytes[128..132] == b"DICM" {
        // file meta group, always explicit VR
        let mut cur = Cursor {
            data: bytes,
            pos: 132,
        };
        while cur.remaining() >= 8 {
            let peek_group = u16::from_le_bytes([cur.data[cur.pos], cur.data[cur.pos + 1]]);
            if peek_group != 0x0002 {
                break;
            }
            let (tag, el) = read_element(&mut cur, true)?;
            tags.insert(tag, el);
        }
        let uid = tags
            .get(&TAG_TRANSFER_SYNTAX)
            .map(|e| {
                String::from_utf8_lossy(&e.value)
                    .trim_end_matches(['\0', ' '])
                    .to_string()
            })
            .ok_or(DicomError::MissingTag(0x0002, 0x0010))?;
        syntax = match uid.as_str() {
            EXPLICIT_VR_LE => TransferSyntax::ExplicitVrLittleEndian,
            IMPLICIT_VR_LE => TransferSyntax::ImplicitVrLittleEndian,
            other => return Err(DicomError::UnsupportedEncoding(other.to_string())),
        };
        cur
    } else {
        // headerless: sniff whether bytes 4..6 form a plausible VR code
        let explicit = looks_like_vr(&bytes[4..6]);
        syntax = if explicit {
            TransferSyntax::ExplicitVrLittleEndian
        } else {
            TransferSyntax::ImplicitVrLittleEndian
        };
        Cursor {
            data: bytes,
            pos: 0,
        }
    };

    let explicit = syntax == TransferSyntax::ExplicitVrLittleEndian;
    while cur.remaining() >= 8 {
        let (tag, el) = read_element(&mut cur, explicit)?;
        tags.insert(tag, el);
    }
    if cur.remaining() != 0 {
        return Err(DicomError::Truncated(cur.pos));
    }

    let descriptor = extract_descriptor(&tags)?;
    let obj = DicomObject {
        transfer_syntax: syntax,
        tags,
        descriptor,
    };
    let expected = obj.descriptor.rows as usize
        * obj.descriptor.columns as usize
        * (obj.descriptor.bits_allocated as usize / 8);
    let actual = obj.pixel_data()?.len();
    if actual != expected {
        return Err(DicomError::BadDescriptor(format!(
            "pixel data length {actual} != rows*cols*bytes {expected}"
        )));
    }
    Ok(obj)
}

fn u16_value(tags: &BTreeMap<Tag, Element>, tag: Tag) -> Result<u16, DicomError> {
    let el = tags.get(&tag).ok_or(DicomError::MissingTag(tag.0, tag.1))?;
    if el.value.len() < 2 {
        return Err(DicomError::BadDescriptor(format!(
            "tag ({:04X},{:04X}) too short",
            tag.0, tag.1
        )));
    }
    Ok(u16::from_le_bytes([el.value[0], el.value[1]]))
}

fn ds_value(tags: &BTreeMap<Tag, Element>, tag: Tag) -> Option<f64> {
    let el = tags.get(&tag)?;
    let s = String::from_utf8_lossy(&el.value);
    // decimal strings may be multi-valued; the first applies
    s.split('\\').next()?.trim().parse().ok()
}

fn extract_descriptor(tags: &BTreeMap<Tag, Element>) -> Result<PixelDescriptor, DicomError> {
    let rows = u16_value(tags, TAG_ROWS)?;
    let columns = u16_value(tags, TAG_COLUMNS)?;
    if rows == 0 || columns == 0 {
        return Err(DicomError::BadDescriptor("zero rows or columns".to_string()));
    }
    let bits_allocated = u16_value(tags, TAG_BITS_ALLOCATED)?;
    if bits_allocated != 8 && bits_allocated != 16 {
        return Err(DicomError::BadDescriptor(format!(
            "bits allocated {bits_allocated} not in {{8, 16}}"
        )));
    }
    let bits_stored = u16_value(tags, TAG_BITS_STORED).unwrap_or(bits_allocated);
    if bits_stored > bits_allocated {
        return Err(DicomError::BadDescriptor(format!(
            "bits stored {bits_stored} > bits allocated {bits_allocated}"
        )));
    }
    let signed = u16_value(tags, TAG_PIXEL_REPRESENTATION).unwrap_or(0) == 1;
    let photometric = match tags
        .get(&TAG_PHOTOMETRIC)
        .map(|e| String::from_utf8_lossy(&e.value).trim().to_string())
        .as_deref()
    {
        Some("MONOCHROME1") => Photometric::Monochrome1,
        Some("MONOCHROME2") | None => Photometric::Monochrome2,
        Some(other) => {
            return Err(DicomError::BadDescriptor(format!(
                "photometric interpretation {other:?}"
            )))
        }
    };
    Ok(PixelDescriptor {
        rows,
        columns,
        bits_allocated,
        bits_stored,
        signed,
        photometric,
        rescale_slope: ds_value(tags, TAG_RESCALE_SLOPE).unwrap_or(1.0),
        rescale_intercept: ds_value(tags, TAG_RESCALE_INTERCEPT).unwrap_or(0.0),
        window_center: ds_value(tags, TAG_WINDOW_CENTER),
        window_width: ds_value(tags, TAG_WINDOW_WIDTH),
    })
}

/// Removes the PHI blacklist and every private (odd-group) tag. Pixel data
/// and descriptor tags are untouched; applying twice equals applying once.
pub fn deidentify(obj: &DicomObject) -> DicomObject {
    let mut out = obj.clone();
    out.tags.retain(|&(group, element), _| {
        group % 2 == 0 && !DEID_BLACKLIST.contains(&(group, element))
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::dicom_builder::{DicomBuilder, JPEG_LOSSLESS};

    fn minimal() -> Vec<u8> {
        DicomBuilder::gray8(2, 2, &[0, 50, 100, 255])
            .with_string(( 0x0010, 0x0010), b"PN", "DOE^JANE")
            .with_string((0x0010, 0x0040), b"CS", "F ")
            .with_string((0x0009, 0x0010), b"LO", "private")
            .build()
    }

    #[test]
    fn parse_minimal_explicit_file() {
        let obj = parse_dicom(&minimal()).unwrap();
        assert_eq!(obj.transfer_syntax, TransferSyntax::ExplicitVrLittleEndian);
        assert_eq!(obj.descriptor.rows, 2);
        assert_eq!(obj.descriptor.columns, 2);
        assert_eq!(obj.descriptor.bits_allocated, 8);
        assert_eq!(obj.pixel_data().unwrap(), &[0, 50, 100, 255]);
    }

    #[test]
    fn parse_headerless_equals_part10() {
        let with_header = parse_dicom(&minimal()).unwrap();
        let headerless = DicomBuilder::gray8(2, 2, &[0, 50, 100, 255])
            .with_string((0x0010, 0x0010), b"PN", "DOE^JANE")
            .with_string((0x0010, 0x0040), b"CS", "F ")
            .with_string((0x0009, 0x0010), b"LO", "private")
            .headerless()
            .build();
        let parsed = parse_dicom(&headerless).unwrap();
        // identical dataset tags; the headerless variant lacks group 0002
        let dataset =
            |o: &DicomObject| -> Vec<(Tag, Element)> {
                o.tags
                    .iter()
                    .filter(|((g, _), _)| *g != 0x0002)
                    .map(|(t, e)| (*t, e.clone()))
                    .collect()
            };
        assert_eq!(dataset(&with_header), dataset(&parsed));
        assert_eq!(parsed.descriptor, with_header.descriptor);
    }

    #[test]
    fn compressed_syntax_rejected_with_uid() {
        let bytes = DicomBuilder::gray8(2, 2, &[0, 50, 100, 255])
            .transfer_syntax(JPEG_LOSSLESS)
            .build();
        match parse_dicom(&bytes) {
            Err(DicomError::UnsupportedEncoding(uid)) => assert_eq!(uid, JPEG_LOSSLESS),
            other => panic!("expected unsupported encoding, got {other:?}"),
        }
    }

    #[test]
    fn truncated_value_reports_offset() {
        let mut bytes = minimal();
        bytes.truncate(bytes.len() - 2);
        assert!(matches!(parse_dicom(&bytes), Err(DicomError::Truncated(_))));
    }

    #[test]
    fn missing_pixel_data_rejected() {
        let bytes = DicomBuilder::gray8(2, 2, &[0, 50, 100, 255])
            .without_pixel_data()
            .build();
        assert_eq!(parse_dicom(&bytes).unwrap_err(), DicomError::NoPixelData);
    }

    #[test]
    fn deidentify_blacklist_and_private_tags() {
        let obj = parse_dicom(&minimal()).unwrap();
        assert!(obj.tags.contains_key(&(0x0010, 0x0010)));
        let clean = deidentify(&obj);
        assert!(!clean.tags.contains_key(&(0x0010, 0x0010)));
        assert!(!clean.tags.contains_key(&(0x0009, 0x0010)));
        // PatientSex retained
        assert_eq!(clean.string_value((0x0010, 0x0040)).unwrap(), "F");
        // pixel data byte-identical
        assert_eq!(clean.pixel_data().unwrap(), obj.pixel_data().unwrap());
        // idempotent
        assert_eq!(deidentify(&clean).tags, clean.tags);
    }
}
