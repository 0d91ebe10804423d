//! Portable graymap (P5) and pixmap (P6) export.

use crate::error::{Error, Result};

pub const BLUE: [u8; 3] = [0, 0, 255];
pub const ORANGE: [u8; 3] = [255, 165, 0];
pub const WHITE: [u8; 3] = [255, 255, 255];

/// Per-pixel comparison of a training example with a sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Difference {
    OnlyInTrain,
    OnlyInSample,
    Agree,
}

impl Difference {
    /// Blue for pixels set only in the training example, orange for pixels
    /// set only in the sample, white otherwise.
    pub fn color(self) -> [u8; 3] {
        match self {
            Difference::OnlyInTrain => BLUE,
            Difference::OnlyInSample => ORANGE,
            Difference::Agree => WHITE,
        }
    }
}

fn check_size(width: usize, height: usize, len: usize) -> Result<()> {
    if width == 0 || height == 0 || width * height != len {
        return Err(Error::invalid(format!(
            "{len} pixels do not fill a {width}x{height} image"
        )));
    }
    Ok(())
}

/// Binary P5 file with maxval 255.
pub fn graymap(width: usize, height: usize, pixels: &[u8]) -> Result<Vec<u8>> {
    check_size(width, height, pixels.len())?;
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    Ok(out)
}

/// Binary P6 file with maxval 255.
pub fn pixmap(width: usize, height: usize, pixels: &[[u8; 3]]) -> Result<Vec<u8>> {
    check_size(width, height, pixels.len())?;
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    out.extend(pixels.iter().flatten());
    Ok(out)
}

/// ±1 values to gray levels: −1 → 0, +1 → 255.
pub fn binary_to_gray(x: &[f64]) -> Vec<u8> {
    x.iter().map(|v| if *v > 0.0 { 255 } else { 0 }).collect()
}

/// Raw-space values rounded and clamped to `[0, 255]`.
pub fn continuous_to_gray(x: &[f64]) -> Vec<u8> {
    x.iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect()
}

/// Pixel-wise comparison of two ±1 vectors of equal length.
pub fn symmetric_difference(train: &[f64], sample: &[f64]) -> Result<Vec<Difference>> {
    if train.len() != sample.len() {
        return Err(Error::Dimension {
            expected: train.len(),
            got: sample.len(),
        });
    }
    Ok(train
        .iter()
        .zip(sample)
        .map(|(t, s)| match (*t > 0.0, *s > 0.0) {
            (true, false) => Difference::OnlyInTrain,
            (false, true) => Difference::OnlyInSample,
            _ => Difference::Agree,
        })
        .collect())
}

/// The symmetric-difference image of a training example and a sample.
pub fn difference_pixmap(width: usize, height: usize, train: &[f64], sample: &[f64]) -> Result<Vec<u8>> {
    let colors: Vec<[u8; 3]> = symmetric_difference(train, sample)?
        .into_iter()
        .map(Difference::color)
        .collect();
    pixmap(width, height, &colors)
}
