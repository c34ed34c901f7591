//! Masked-inference interventions: binary masks from gaze maps, zero-masking,
//! and regional Gaussian blur. Selecting the gaze region or its complement
//! covers all four blur/mask x gaze/non-gaze probe conditions.

use alloc::vec::Vec;

use crate::blur::gaussian_blur_fixed;
use crate::error::{CoreError, Result};
use crate::grid::Map2D;

/// A boolean grid marking the selected region of a gaze map.
#[derive(Clone, Debug, PartialEq)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize, bits: Vec<bool>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(CoreError::EmptyDims);
        }
        if bits.len() != height * width {
            return Err(CoreError::LengthMismatch {
                expected: height * width,
                got: bits.len(),
            });
        }
        Ok(Self {
            height,
            width,
            bits,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn selected_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

/// Thresholds a `[0, 1]` gaze map into the high-attention region:
/// `bits[i] = g[i] >= threshold`, with `0 < threshold < 1`.
pub fn gaze_mask(g: &Map2D, threshold: f64) -> Result<BinaryMask> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(CoreError::BadParam {
            name: "threshold",
            value: threshold,
        });
    }
    if g.values().iter().any(|&v| v < -1e-9 || v > 1.0 + 1e-9) {
        return Err(CoreError::ValueOutOfRange("gaze_mask expects g in [0,1]"));
    }
    let bits = g.values().iter().map(|&v| v >= threshold).collect();
    BinaryMask::new(g.height(), g.width(), bits)
}

/// Zeroes the selected pixels (the complement when `invert` is set); all
/// other pixels are bit-identical to the input.
pub fn apply_mask(img: &Map2D, mask: &BinaryMask, invert: bool) -> Result<Map2D> {
    check_mask_dims(img, mask)?;
    let values = img
        .values()
        .iter()
        .zip(mask.bits())
        .map(|(&v, &b)| if b != invert { 0.0 } else { v })
        .collect();
    Map2D::new(img.height(), img.width(), values)
}

/// Blurs the whole image with a fixed-size Gaussian kernel, then composites
/// the blurred content into the selected region (the complement when
/// `invert` is set). Unselected pixels stay bit-identical, and region edges
/// show the true blurred content rather than a masked-input artifact.
pub fn apply_region_blur(
    img: &Map2D,
    mask: &BinaryMask,
    kernel_size: usize,
    sigma: f64,
    invert: bool,
) -> Result<Map2D> {
    check_mask_dims(img, mask)?;
    let blurred = gaussian_blur_fixed(img, kernel_size, sigma)?;
    let values = img
        .values()
        .iter()
        .zip(blurred.values())
        .zip(mask.bits())
        .map(|((&orig, &soft), &b)| if b != invert { soft } else { orig })
        .collect();
    Map2D::new(img.height(), img.width(), values)
}

fn check_mask_dims(img: &Map2D, mask: &BinaryMask) -> Result<()> {
    if img.height() != mask.height() || img.width() != mask.width() {
        return Err(CoreError::DimMismatch {
            left: (img.height(), img.width()),
            right: (mask.height(), mask.width()),
        });
    }
    Ok(())
}
