//! Dense 2-D grids and the normalization rules shared by every pipeline stage.
//!
//! [`Map2D`] is the universal carrier: gaze maps, attention maps, mask
//! sources, image planes, and loss gradients are all row-major `f64` grids.
//! Values are finite by construction; they are non-negative everywhere except
//! for explicitly signed intermediates such as gradients.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::fmath;

/// Default additive floor used when converting maps to distributions.
pub const EPS_FLOOR_DEFAULT: f64 = 1e-7;

/// A dense height x width grid of finite `f64` values, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Map2D {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl Map2D {
    /// Builds a grid from row-major values, validating shape and finiteness.
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(CoreError::EmptyDims);
        }
        let expected = height * width;
        if values.len() != expected {
            return Err(CoreError::LengthMismatch {
                expected,
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::NonFinite("Map2D values"));
        }
        Ok(Self {
            height,
            width,
            values,
        })
    }

    /// All-zero grid.
    pub fn zeros(height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(CoreError::EmptyDims);
        }
        Ok(Self {
            height,
            width,
            values: vec![0.0; height * width],
        })
    }

    /// Grid filled by `f(row, col)`.
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(height.checked_mul(width).unwrap_or(0));
        for y in 0..height {
            for x in 0..width {
                values.push(f(y, x));
            }
        }
        Self::new(height, width, values)
    }

    /// Internal constructor for values already known to be valid.
    pub(crate) fn from_raw(height: usize, width: usize, values: Vec<f64>) -> Self {
        debug_assert!(height >= 1 && width >= 1);
        debug_assert_eq!(values.len(), height * width);
        Self {
            height,
            width,
            values,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Mutable access to the backing values. Callers must keep them finite.
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn idx(&self, y: usize, x: usize) -> usize {
        y * self.width + x
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.values[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, v: f64) {
        self.values[y * self.width + x] = v;
    }

    pub fn same_dims(&self, other: &Map2D) -> bool {
        self.height == other.height && self.width == other.width
    }

    pub(crate) fn check_same_dims(&self, other: &Map2D) -> Result<()> {
        if self.same_dims(other) {
            Ok(())
        } else {
            Err(CoreError::DimMismatch {
                left: (self.height, self.width),
                right: (other.height, other.width),
            })
        }
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Elementwise map into a new grid. `f` must produce finite values.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Map2D {
        Map2D::from_raw(
            self.height,
            self.width,
            self.values.iter().map(|&v| f(v)).collect(),
        )
    }
}

/// A [`Map2D`] whose entries are strictly positive and sum to one.
///
/// Only [`dist_normalize`] produces these, so holding a `ProbMap` is proof
/// the map is usable as a distribution by KL and SIM.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbMap(Map2D);

impl ProbMap {
    pub fn as_map(&self) -> &Map2D {
        &self.0
    }

    pub fn into_map(self) -> Map2D {
        self.0
    }

    pub fn values(&self) -> &[f64] {
        self.0.values()
    }

    /// Validates an existing map as a distribution (positive, sums to 1e-6 of 1).
    pub fn try_from_map(m: Map2D) -> Result<Self> {
        if m.values().iter().any(|&v| v <= 0.0) {
            return Err(CoreError::NotADistribution("non-positive entry"));
        }
        if fmath::abs(m.sum() - 1.0) > 1e-6 {
            return Err(CoreError::NotADistribution("sum differs from 1"));
        }
        Ok(ProbMap(m))
    }
}

/// Affinely rescales a map onto `[0, 1]`; a constant map becomes all zeros.
///
/// Argmax and argmin positions are preserved, and the operation is
/// idempotent.
pub fn minmax_normalize(m: &Map2D) -> Map2D {
    let lo = m.min();
    let hi = m.max();
    let range = hi - lo;
    if range <= 0.0 {
        // A flat map carries no saliency signal.
        return Map2D::from_raw(m.height, m.width, vec![0.0; m.len()]);
    }
    m.map(|v| (v - lo) / range)
}

/// Converts a non-negative map into a strictly positive distribution:
/// `(m + eps_floor) / sum(m + eps_floor)`.
pub fn dist_normalize(m: &Map2D, eps_floor: f64) -> Result<ProbMap> {
    if !(eps_floor > 0.0) || !eps_floor.is_finite() {
        return Err(CoreError::BadParam {
            name: "eps_floor",
            value: eps_floor,
        });
    }
    if m.values().iter().any(|&v| v < 0.0) {
        return Err(CoreError::ValueOutOfRange("dist_normalize needs m >= 0"));
    }
    let total: f64 = m.values().iter().map(|&v| v + eps_floor).sum();
    let out = m.map(|v| (v + eps_floor) / total);
    Ok(ProbMap(out))
}

/// Bilinear resize with corner-aligned sampling.
///
/// Output extremes never exceed the input's min/max, and resizing to the
/// same shape reproduces the input exactly.
pub fn bilinear_resize(m: &Map2D, out_h: usize, out_w: usize) -> Result<Map2D> {
    if out_h == 0 || out_w == 0 {
        return Err(CoreError::EmptyDims);
    }
    let (in_h, in_w) = (m.height(), m.width());
    let scale_y = if out_h > 1 {
        (in_h - 1) as f64 / (out_h - 1) as f64
    } else {
        0.0
    };
    let scale_x = if out_w > 1 {
        (in_w - 1) as f64 / (out_w - 1) as f64
    } else {
        0.0
    };
    let mut values = Vec::with_capacity(out_h * out_w);
    for oy in 0..out_h {
        let sy = oy as f64 * scale_y;
        let y0 = fmath::floor(sy) as usize;
        let y1 = (y0 + 1).min(in_h - 1);
        let fy = sy - y0 as f64;
        for ox in 0..out_w {
            let sx = ox as f64 * scale_x;
            let x0 = fmath::floor(sx) as usize;
            let x1 = (x0 + 1).min(in_w - 1);
            let fx = sx - x0 as f64;
            // lerp as a + f*(b - a): constant inputs stay bit-exact.
            let top = lerp(m.get(y0, x0), m.get(y0, x1), fx);
            let bot = lerp(m.get(y1, x0), m.get(y1, x1), fx);
            values.push(lerp(top, bot, fy));
        }
    }
    Ok(Map2D::from_raw(out_h, out_w, values))
}

#[inline]
fn lerp(a: f64, b: f64, f: f64) -> f64 {
    a + f * (b - a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn map(h: usize, w: usize, v: &[f64]) -> Map2D {
        Map2D::new(h, w, v.to_vec()).unwrap()
    }

    #[test]
    fn new_rejects_bad_shapes() {
        assert_eq!(Map2D::new(0, 3, vec![]), Err(CoreError::EmptyDims));
        assert!(matches!(
            Map2D::new(2, 2, vec![0.0; 3]),
            Err(CoreError::LengthMismatch { .. })
        ));
        assert!(matches!(
            Map2D::new(1, 2, vec![0.0, f64::NAN]),
            Err(CoreError::NonFinite(_))
        ));
    }

    #[test]
    fn minmax_affine_example() {
        let m = map(2, 2, &[1.0, 3.0, 3.0, 5.0]);
        let n = minmax_normalize(&m);
        assert_eq!(n.values(), &[0.0, 0.5, 0.5, 1.0]);
    }

    #[test]
    fn minmax_constant_is_zero() {
        let m = map(2, 3, &[4.2; 6]);
        assert!(minmax_normalize(&m).values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn minmax_hits_exact_endpoints() {
        let m = map(1, 4, &[-2.0, 7.0, 0.5, 3.0]);
        let n = minmax_normalize(&m);
        assert_eq!(n.min(), 0.0);
        assert_eq!(n.max(), 1.0);
    }

    #[test]
    fn dist_normalize_uniform() {
        let m = map(2, 2, &[1.0; 4]);
        let p = dist_normalize(&m, 1e-7).unwrap();
        for &v in p.values() {
            assert!((v - 0.25).abs() < 1e-9);
        }
    }

    #[test]
    fn dist_normalize_concentrated() {
        let m = map(2, 2, &[2.0, 0.0, 0.0, 0.0]);
        let p = dist_normalize(&m, 1e-7).unwrap();
        assert!((p.values()[0] - 1.0).abs() < 1e-6);
        for &v in &p.values()[1..] {
            assert!(v > 0.0 && v < 1e-6);
        }
        assert!((p.as_map().sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dist_normalize_rejects_bad_eps() {
        let m = map(1, 1, &[1.0]);
        assert!(dist_normalize(&m, 0.0).is_err());
        assert!(dist_normalize(&m, -1.0).is_err());
    }

    #[test]
    fn resize_identity() {
        let m = map(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let r = bilinear_resize(&m, 2, 2).unwrap();
        assert_eq!(r, m);
    }

    #[test]
    fn resize_constant_stays_constant() {
        let m = map(3, 3, &[2.5; 9]);
        let r = bilinear_resize(&m, 7, 5).unwrap();
        assert!(r.values().iter().all(|&v| (v - 2.5).abs() < 1e-12));
    }

    #[test]
    fn resize_column_ramp() {
        // Corner-aligned upsampling of a 0/1 column pair gives thirds.
        let m = map(2, 2, &[0.0, 1.0, 0.0, 1.0]);
        let r = bilinear_resize(&m, 4, 4).unwrap();
        for y in 0..4 {
            for x in 0..4 {
                assert!((r.get(y, x) - x as f64 / 3.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn resize_rejects_zero_dims() {
        let m = map(2, 2, &[0.0; 4]);
        assert!(bilinear_resize(&m, 0, 4).is_err());
        assert!(bilinear_resize(&m, 4, 0).is_err());
    }

    proptest! {
        #[test]
        fn minmax_is_idempotent(vals in proptest::collection::vec(-50.0f64..50.0, 1..64)) {
            let w = vals.len();
            let m = Map2D::new(1, w, vals).unwrap();
            let once = minmax_normalize(&m);
            let twice = minmax_normalize(&once);
            for (a, b) in once.values().iter().zip(twice.values()) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn dist_normalize_is_valid_distribution(
            vals in proptest::collection::vec(0.0f64..100.0, 1..64),
        ) {
            let w = vals.len();
            let m = Map2D::new(1, w, vals).unwrap();
            let p = dist_normalize(&m, 1e-7).unwrap();
            prop_assert!((p.as_map().sum() - 1.0).abs() < 1e-6);
            prop_assert!(p.values().iter().all(|&v| v > 0.0));
        }

        #[test]
        fn resize_respects_bounds(
            vals in proptest::collection::vec(-10.0f64..10.0, 16),
            oh in 1usize..9,
            ow in 1usize..9,
        ) {
            let m = Map2D::new(4, 4, vals).unwrap();
            let r = bilinear_resize(&m, oh, ow).unwrap();
            prop_assert!(r.min() >= m.min() - 1e-12);
            prop_assert!(r.max() <= m.max() + 1e-12);
        }
    }
}
