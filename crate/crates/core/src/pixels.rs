//! Pixel decoding and model-input preprocessing: rescale/window to [0,1],
//! 8-bit quantization, zero-padding to square, bilinear resize to
//! 1024x1024, channel replication, and channel-wise normalization.

use crate::dicom::{DicomError, DicomObject, Photometric};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;
use thiserror::Error;

pub const TENSOR_SIDE: usize = 1024;
pub const TENSOR_CHANNELS: usize = 3;
pub const TENSOR_MAGIC: &[u8; 4] = b"CXRT";
pub const NORM_MEAN: [f64; 3] = [123.675, 116.28, 103.53];
pub const NORM_STD: [f64; 3] = [58.395, 57.12, 57.375];

#[derive(Debug, Error)]
pub enum PixelError {
    #[error(transparent)]
    Dicom(#[from] DicomError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("png encode error on {path}: {source}")]
    Png {
        path: String,
        source: image::ImageError,
    },
    #[error("bad tensor file: {0}")]
    BadTensorFile(String),
}

/// Grayscale image with intensities in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub samples: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, samples: Vec<f64>) -> Self {
        assert_eq!(samples.len(), width * height);
        debug_assert!(samples.iter().all(|&v| (0.0..=1.0).contains(&v)));
        GrayImage {
            width,
            height,
            samples,
        }
    }
}

/// Normalized 1024x1024x3 model-input tensor, row-major HWC.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelTensor {
    pub values: Vec<f64>,
}

impl PixelTensor {
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.values[(y * TENSOR_SIDE + x) * TENSOR_CHANNELS + c]
    }
}

/// Decodes stored pixel values into [0, 1]: rescale slope/intercept, then
/// the window transform when window tags are present, else min-max
/// scaling. MONOCHROME1 output is inverted. A constant image under
/// min-max maps to 0.5 everywhere.
pub fn decode_pixels(obj: &DicomObject) -> Result<GrayImage, PixelError> {
    let d = &obj.descriptor;
    let raw = obj.pixel_data()?;
    let stored: Vec<f64> = match (d.bits_allocated, d.signed) {
        (8, false) => raw.iter().map(|&b| b as f64).collect(),
        (8, true) => raw.iter().map(|&b| b as i8 as f64).collect(),
        (16, false) => raw
            .chunks_exact(2)
            .map(|c| u16::from_le_bytes([c[0], c[1]]) as f64)
            .collect(),
        (16, true) => raw
            .chunks_exact(2)
            .map(|c| i16::from_le_bytes([c[0], c[1]]) as f64)
            .collect(),
        (bits, _) => {
            return Err(DicomError::BadDescriptor(format!("bits allocated {bits}")).into())
        }
    };
    let rescaled: Vec<f64> = stored
        .iter()
        .map(|&v| d.rescale_slope * v + d.rescale_intercept)
        .collect();

    let mut samples: Vec<f64> = match (d.window_center, d.window_width) {
        (Some(center), Some(width)) => {
            if width <= 0.0 {
                return Err(DicomError::DegenerateWindow(width).into());
            }
            let lo = center - width / 2.0;
            rescaled
                .iter()
                .map(|&v| ((v - lo) / width).clamp(0.0, 1.0))
                .collect()
        }
        _ => {
            let min = rescaled.iter().copied().fold(f64::INFINITY, f64::min);
            let max = rescaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if max > min {
                rescaled.iter().map(|&v| (v - min) / (max - min)).collect()
            } else {
                vec![0.5; rescaled.len()]
            }
        }
    };
    if d.photometric == Photometric::Monochrome1 {
        for v in samples.iter_mut() {
            *v = 1.0 - *v;
        }
    }
    Ok(GrayImage::new(d.columns as usize, d.rows as usize, samples))
}

/// Round-half-up quantization of [0, 1] samples to 8 bits.
pub fn quantize_8bit(img: &GrayImage) -> Vec<u8> {
    img.samples
        .iter()
        .map(|&v| ((v * 255.0 + 0.5).floor().clamp(0.0, 255.0)) as u8)
        .collect()
}

/// Zero-pads an 8-bit image to a square of side max(width, height); the
/// split is even with the extra pixel on the bottom/right.
fn pad_square(data: &[u8], width: usize, height: usize) -> (Vec<u8>, usize) {
    let side = width.max(height);
    let pad_left = (side - width) / 2;
    let pad_top = (side - height) / 2;
    let mut out = vec![0u8; side * side];
    for y in 0..height {
        let dst = (y + pad_top) * side + pad_left;
        out[dst..dst + width].copy_from_slice(&data[y * width..(y + 1) * width]);
    }
    (out, side)
}

/// Bilinear resample with pixel centers at (i + 0.5) * scale - 0.5.
fn resize_bilinear(data: &[u8], side: usize, target: usize) -> Vec<f64> {
    let scale = side as f64 / target as f64;
    let mut out = vec![0.0; target * target];
    for y in 0..target {
        let sy = ((y as f64 + 0.5) * scale - 0.5).clamp(0.0, (side - 1) as f64);
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(side - 1);
        let fy = sy - y0 as f64;
        for x in 0..target {
            let sx = ((x as f64 + 0.5) * scale - 0.5).clamp(0.0, (side - 1) as f64);
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(side - 1);
            let fx = sx - x0 as f64;
            let top = data[y0 * side + x0] as f64 * (1.0 - fx) + data[y0 * side + x1] as f64 * fx;
            let bot = data[y1 * side + x0] as f64 * (1.0 - fx) + data[y1 * side + x1] as f64 * fx;
            out[y * target + x] = top * (1.0 - fy) + bot * fy;
        }
    }
    out
}

/// Full preprocessing chain: 8-bit quantization, square zero-padding,
/// bilinear resize to 1024x1024, replication to 3 channels, channel-wise
/// normalization.
pub fn preprocess(img: &GrayImage) -> PixelTensor {
    let quantized = quantize_8bit(img);
    let (padded, side) = pad_square(&quantized, img.width, img.height);
    let resized = resize_bilinear(&padded, side, TENSOR_SIDE);
    let mut values = Vec::with_capacity(TENSOR_SIDE * TENSOR_SIDE * TENSOR_CHANNELS);
    for &v in &resized {
        for c in 0..TENSOR_CHANNELS {
            values.push((v - NORM_MEAN[c]) / NORM_STD[c]);
        }
    }
    PixelTensor { values }
}

/// Writes a grayscale 8-bit PNG; read-back equals the 8-bit quantization
/// of the samples.
pub fn export_png(img: &GrayImage, path: &Path) -> Result<(), PixelError> {
    let data = quantize_8bit(img);
    let buf = image::GrayImage::from_raw(img.width as u32, img.height as u32, data)
        .expect("buffer sized to image");
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|source| PixelError::Png {
            path: path.display().to_string(),
            source,
        })
}

/// Serializes a tensor: magic "CXRT", u32 height/width/channels, then
/// little-endian f32 values in row-major HWC order.
pub fn write_tensor(tensor: &PixelTensor, path: &Path) -> Result<(), PixelError> {
    let io_err = |source| PixelError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut buf = Vec::with_capacity(16 + tensor.values.len() * 4);
    buf.extend_from_slice(TENSOR_MAGIC);
    buf.extend_from_slice(&(TENSOR_SIDE as u32).to_le_bytes());
    buf.extend_from_slice(&(TENSOR_SIDE as u32).to_le_bytes());
    buf.extend_from_slice(&(TENSOR_CHANNELS as u32).to_le_bytes());
    for &v in &tensor.values {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    let mut file = std::fs::File::create(path).map_err(io_err)?;
    file.write_all(&buf).map_err(io_err)
}

pub fn read_tensor(path: &Path) -> Result<Vec<f32>, PixelError> {
    let bytes = std::fs::read(path).map_err(|source| PixelError::Io {
        path: path.display().to_string(),
        source,
    })?;
    if bytes.len() < 16 || &bytes[0..4] != TENSOR_MAGIC {
        return Err(PixelError::BadTensorFile("bad magic".to_string()));
    }
    let dim = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    let (h, w, c) = (dim(4), dim(8), dim(12));
    let expected = 16 + h * w * c * 4;
    if bytes.len() != expected {
        return Err(PixelError::BadTensorFile(format!(
            "expected {expected} bytes for {h}x{w}x{c}, got {}",
            bytes.len()
        )));
    }
    Ok(bytes[16..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect())
}
