//! Separable Gaussian smoothing with renormalized borders.
//!
//! Near an edge the truncated kernel is rescaled to sum 1 at each position,
//! so smoothing never darkens the border band the way zero padding would.
//! A final global rescale pins the output's total mass to the input's, which
//! keeps total fixation duration intact no matter where fixations land.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::fmath;
use crate::grid::Map2D;

/// Gaussian blur with kernel radius `ceil(3 * sigma_px)`.
pub fn gaussian_blur(m: &Map2D, sigma_px: f64) -> Result<Map2D> {
    if !(sigma_px > 0.0) || !sigma_px.is_finite() {
        return Err(CoreError::BadParam {
            name: "sigma_px",
            value: sigma_px,
        });
    }
    let radius = fmath::ceil(3.0 * sigma_px) as usize;
    Ok(blur_impl(m, radius, sigma_px))
}

/// Gaussian blur with a fixed odd kernel size (radius `(kernel_size - 1) / 2`),
/// with no 3-sigma widening.
pub fn gaussian_blur_fixed(m: &Map2D, kernel_size: usize, sigma: f64) -> Result<Map2D> {
    if kernel_size == 0 || kernel_size % 2 == 0 {
        return Err(CoreError::BadParam {
            name: "kernel_size",
            value: kernel_size as f64,
        });
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(CoreError::BadParam {
            name: "sigma",
            value: sigma,
        });
    }
    Ok(blur_impl(m, (kernel_size - 1) / 2, sigma))
}

/// Normalized 1-D Gaussian taps for offsets `-radius..=radius`.
fn kernel(radius: usize, sigma: f64) -> Vec<f64> {
    let mut w = Vec::with_capacity(2 * radius + 1);
    let inv = 1.0 / (2.0 * sigma * sigma);
    for k in -(radius as isize)..=(radius as isize) {
        let d = k as f64;
        w.push(fmath::exp(-d * d * inv));
    }
    let total: f64 = w.iter().sum();
    for v in &mut w {
        *v /= total;
    }
    w
}

/// One separable pass along a line: renormalized truncated convolution.
fn convolve_line(src: &[f64], dst: &mut [f64], w: &[f64], radius: usize) {
    let n = src.len();
    for (i, out) in dst.iter_mut().enumerate() {
        let lo = i.saturating_sub(radius);
        let hi = (i + radius).min(n - 1);
        let mut num = 0.0;
        let mut den = 0.0;
        for j in lo..=hi {
            let wk = w[j + radius - i];
            num += wk * src[j];
            den += wk;
        }
        *out = num / den;
    }
}

fn blur_impl(m: &Map2D, radius: usize, sigma: f64) -> Map2D {
    let (h, w) = (m.height(), m.width());
    if radius == 0 {
        return m.clone();
    }
    let taps = kernel(radius, sigma);

    // Horizontal pass.
    let mut mid = vec![0.0; h * w];
    for y in 0..h {
        let row = &m.values()[y * w..(y + 1) * w];
        convolve_line(row, &mut mid[y * w..(y + 1) * w], &taps, radius);
    }

    // Vertical pass over columns.
    let mut out = vec![0.0; h * w];
    let mut col = vec![0.0; h];
    let mut col_out = vec![0.0; h];
    for x in 0..w {
        for y in 0..h {
            col[y] = mid[y * w + x];
        }
        convolve_line(&col, &mut col_out, &taps, radius);
        for y in 0..h {
            out[y * w + x] = col_out[y];
        }
    }

    // Pin total mass to the input's.
    let mass_in = m.sum();
    let mass_out: f64 = out.iter().sum();
    if mass_in > 0.0 && mass_out > 0.0 {
        let scale = mass_in / mass_out;
        for v in &mut out {
            *v *= scale;
        }
    }
    Map2D::from_raw(h, w, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Map2D;

    #[test]
    fn rejects_bad_params() {
        let m = Map2D::zeros(4, 4).unwrap();
        assert!(gaussian_blur(&m, 0.0).is_err());
        assert!(gaussian_blur(&m, -1.0).is_err());
        assert!(gaussian_blur_fixed(&m, 4, 1.0).is_err());
        assert!(gaussian_blur_fixed(&m, 3, 0.0).is_err());
    }

    #[test]
    fn centered_impulse_keeps_unit_mass_and_symmetry() {
        let mut m = Map2D::zeros(31, 31).unwrap();
        m.set(15, 15, 1.0);
        let b = gaussian_blur(&m, 3.0).unwrap();
        assert!((b.sum() - 1.0).abs() < 1e-6);
        let peak = b.get(15, 15);
        assert!((0..31).all(|y| (0..31).all(|x| b.get(y, x) <= peak)));
        for dy in 0..5 {
            for dx in 0..5 {
                let a = b.get(15 + dy, 15 + dx);
                assert!((a - b.get(15 - dy, 15 - dx)).abs() < 1e-12);
                assert!((a - b.get(15 + dx, 15 + dy)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constant_map_is_fixed_point() {
        let m = Map2D::new(9, 7, alloc::vec![3.25; 63]).unwrap();
        let b = gaussian_blur(&m, 2.0).unwrap();
        for &v in b.values() {
            assert!((v - 3.25).abs() < 1e-9);
        }
    }

    #[test]
    fn edge_mass_is_conserved() {
        // A fixation clamped onto a corner must not leak duration off-chart.
        let mut m = Map2D::zeros(12, 12).unwrap();
        m.set(0, 0, 250.0);
        m.set(11, 3, 40.0);
        let b = gaussian_blur(&m, 4.0).unwrap();
        assert!((b.sum() - 290.0).abs() / 290.0 < 1e-9);
    }

    #[test]
    fn interior_impulse_translates() {
        let sigma = 1.0;
        let radius = 3; // ceil(3 * sigma)
        let n = 17;
        let mut a = Map2D::zeros(n, n).unwrap();
        let mut b = Map2D::zeros(n, n).unwrap();
        a.set(2 * radius, 2 * radius, 1.0);
        b.set(2 * radius + 3, 2 * radius + 2, 1.0);
        let ba = gaussian_blur(&a, sigma).unwrap();
        let bb = gaussian_blur(&b, sigma).unwrap();
        for dy in -(radius as isize)..=(radius as isize) {
            for dx in -(radius as isize)..=(radius as isize) {
                let ya = (2 * radius as isize + dy) as usize;
                let xa = (2 * radius as isize + dx) as usize;
                let v1 = ba.get(ya, xa);
                let v2 = bb.get(ya + 3, xa + 2);
                assert!((v1 - v2).abs() < 1e-12);
            }
        }
    }
}
