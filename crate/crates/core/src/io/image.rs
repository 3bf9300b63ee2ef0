//! Grayscale image export: 8-bit PNG or 16-bit binary PGM, picked by
//! file extension.

use std::path::Path;

use ndarray::Array2;

use super::write_atomic;
use crate::error::{Error, Result};

/// Linear map of `[lo, hi]` onto the full integer range, clamped.
fn quantize(v: f32, lo: f32, hi: f32, max: f32) -> f32 {
    if hi <= lo {
        return 0.0;
    }
    (((v - lo) / (hi - lo)).clamp(0.0, 1.0) * max).round()
}

pub fn encode_png(img: &Array2<f32>, lo: f32, hi: f32) -> Result<Vec<u8>> {
    let (h, w) = img.dim();
    let pixels: Vec<u8> = img.iter().map(|&v| quantize(v, lo, hi, 255.0) as u8).collect();
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, w as u32, h as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc
            .write_header()
            .map_err(|e| Error::Usage(format!("png: {e}")))?;
        writer
            .write_image_data(&pixels)
            .map_err(|e| Error::Usage(format!("png: {e}")))?;
    }
    Ok(out)
}

/// Binary (P5) PGM with maxval 65535; samples are big-endian.
pub fn encode_pgm16(img: &Array2<f32>, lo: f32, hi: f32) -> Vec<u8> {
    let (h, w) = img.dim();
    let mut out = format!("P5\n{w} {h}\n65535\n").into_bytes();
    for &v in img.iter() {
        out.extend_from_slice(&(quantize(v, lo, hi, 65535.0) as u16).to_be_bytes());
    }
    out
}

/// Writes `img` with `[lo, hi]` stretched to black..white.
pub fn save_image(path: &Path, img: &Array2<f32>, lo: f32, hi: f32) -> Result<()> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    let bytes = match ext.as_deref() {
        Some("png") => encode_png(img, lo, hi)?,
        Some("pgm") => encode_pgm16(img, lo, hi),
        _ => {
            return Err(Error::Usage(format!(
                "{}: image path must end in .png or .pgm",
                path.display()
            )))
        }
    };
    write_atomic(path, &bytes)
}

/// Display range for signed flow: symmetric about zero so static tissue is
/// mid-gray.
pub fn symmetric_range(img: &Array2<f32>) -> (f32, f32) {
    let m = img.iter().fold(0.0f32, |m, v| m.max(v.abs()));
    let m = if m > 0.0 { m } else { 1.0 };
    (-m, m)
}
