//! Collapsing a 4-D attention tensor into an image-aligned saliency map:
//! mean over the first `m_layers` layers, all heads, and all text tokens,
//! then a row-major reshape onto the patch grid and a normalized upsample
//! to image resolution.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::grid::{bilinear_resize, minmax_normalize, Map2D};
use crate::tensor::AttnTensor;

/// The rows x cols factorization of a flat image-patch axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PatchGrid {
    pub rows: usize,
    pub cols: usize,
}

impl PatchGrid {
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(CoreError::EmptyDims);
        }
        Ok(Self { rows, cols })
    }

    pub fn patches(&self) -> usize {
        self.rows * self.cols
    }
}

/// Mean attention per image patch over the first `m_layers` layers, all
/// heads, and all text tokens.
pub fn aggregate_attention(t: &AttnTensor, m_layers: usize) -> Result<Vec<f64>> {
    if m_layers == 0 || m_layers > t.layers() {
        return Err(CoreError::LayerOutOfRange {
            m_layers,
            layers: t.layers(),
        });
    }
    let patches = t.image_patches();
    let mut out = vec![0.0f64; patches];
    for l in 0..m_layers {
        for h in 0..t.heads() {
            for tok in 0..t.text_tokens() {
                for (acc, &v) in out.iter_mut().zip(t.row(l, h, tok)) {
                    *acc += v;
                }
            }
        }
    }
    let count = (m_layers * t.heads() * t.text_tokens()) as f64;
    for v in &mut out {
        *v /= count;
    }
    Ok(out)
}

/// Row-major reshape of a flat patch vector onto `grid`.
pub fn to_patch_map(v: &[f64], grid: PatchGrid) -> Result<Map2D> {
    if v.len() != grid.patches() {
        return Err(CoreError::LengthMismatch {
            expected: grid.patches(),
            got: v.len(),
        });
    }
    Map2D::new(grid.rows, grid.cols, v.to_vec())
}

/// Upsamples a patch map to image resolution and min-max normalizes it.
/// The image must be at least as large as the patch grid on both axes.
pub fn to_image_map(pm: &Map2D, img_h: usize, img_w: usize) -> Result<Map2D> {
    if img_h < pm.height() || img_w < pm.width() {
        return Err(CoreError::DimMismatch {
            left: (pm.height(), pm.width()),
            right: (img_h, img_w),
        });
    }
    Ok(minmax_normalize(&bilinear_resize(pm, img_h, img_w)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(l: usize, h: usize, t: usize, p: usize, seed: u64) -> AttnTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values: Vec<f64> = (0..l * h * t * p).map(|_| rng.gen_range(0.0..1.0)).collect();
        AttnTensor::new(l, h, t, p, values).unwrap()
    }

    /// Independent reference: plain quadruple loop via `get`.
    fn brute_mean(t: &AttnTensor, m: usize) -> Vec<f64> {
        let mut out = alloc::vec![0.0; t.image_patches()];
        for p in 0..t.image_patches() {
            let mut acc = 0.0;
            for l in 0..m {
                for h in 0..t.heads() {
                    for tok in 0..t.text_tokens() {
                        acc += t.get(l, h, tok, p);
                    }
                }
            }
            out[p] = acc / (m * t.heads() * t.text_tokens()) as f64;
        }
        out
    }

    #[test]
    fn constant_tensor_gives_constant_mean() {
        let t = AttnTensor::new(2, 3, 4, 5, alloc::vec![0.01; 120]).unwrap();
        let v = aggregate_attention(&t, 2).unwrap();
        assert!(v.iter().all(|&x| (x - 0.01).abs() < 1e-15));
    }

    #[test]
    fn layer_slicing_hand_example() {
        // layer 0: heads [[.2,.8],[.4,.6]], layer 1: zeros.
        let values = alloc::vec![0.2, 0.8, 0.4, 0.6, 0.0, 0.0, 0.0, 0.0];
        let t = AttnTensor::new(2, 2, 1, 2, values).unwrap();
        let v = aggregate_attention(&t, 1).unwrap();
        assert!((v[0] - 0.3).abs() < 1e-12);
        assert!((v[1] - 0.7).abs() < 1e-12);
        let all = aggregate_attention(&t, 2).unwrap();
        assert!((all[0] - 0.15).abs() < 1e-12);
    }

    #[test]
    fn matches_brute_force_mean() {
        let t = random_tensor(3, 4, 5, 16, 11);
        for m in 1..=3 {
            let fast = aggregate_attention(&t, m).unwrap();
            let slow = brute_mean(&t, m);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn aggregation_is_linear() {
        let t1 = random_tensor(2, 2, 3, 8, 5);
        let t2 = random_tensor(2, 2, 3, 8, 6);
        let (alpha, beta) = (0.3, 0.45);
        let mixed: Vec<f64> = t1
            .values()
            .iter()
            .zip(t2.values())
            .map(|(a, b)| alpha * a + beta * b)
            .collect();
        let tm = AttnTensor::new(2, 2, 3, 8, mixed).unwrap();
        let am = aggregate_attention(&tm, 2).unwrap();
        let a1 = aggregate_attention(&t1, 2).unwrap();
        let a2 = aggregate_attention(&t2, 2).unwrap();
        for i in 0..8 {
            assert!((am[i] - (alpha * a1[i] + beta * a2[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_out_of_range_layers() {
        let t = random_tensor(2, 2, 2, 4, 1);
        assert!(aggregate_attention(&t, 0).is_err());
        assert!(aggregate_attention(&t, 3).is_err());
    }

    #[test]
    fn patch_map_row_major() {
        let m = to_patch_map(&[1.0, 2.0, 3.0, 4.0], PatchGrid::new(2, 2).unwrap()).unwrap();
        assert_eq!(m.get(0, 0), 1.0);
        assert_eq!(m.get(0, 1), 2.0);
        assert_eq!(m.get(1, 0), 3.0);
        assert_eq!(m.get(1, 1), 4.0);

        let v: Vec<f64> = (0..16).map(|k| k as f64).collect();
        let m = to_patch_map(&v, PatchGrid::new(4, 4).unwrap()).unwrap();
        for k in 0..16 {
            assert_eq!(m.get(k / 4, k % 4), k as f64);
        }
    }

    #[test]
    fn patch_map_rejects_size_mismatch() {
        assert!(to_patch_map(&[0.0; 5], PatchGrid::new(2, 2).unwrap()).is_err());
    }

    #[test]
    fn argmax_survives_reshape_and_upsample() {
        let t = random_tensor(2, 2, 4, 16, 42);
        let v = aggregate_attention(&t, 2).unwrap();
        let argmax_flat = v
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        let pm = to_patch_map(&v, PatchGrid::new(4, 4).unwrap()).unwrap();
        assert_eq!(pm.get(argmax_flat / 4, argmax_flat % 4), v[argmax_flat]);

        let img = to_image_map(&pm, 16, 16).unwrap();
        // Corner-aligned upsample keeps the patch maximum at value 1.
        let (py, px) = (argmax_flat / 4, argmax_flat % 4);
        assert!((img.get(py * 5, px * 5) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn image_map_of_constant_patches_is_zero() {
        let pm = Map2D::new(2, 2, alloc::vec![0.4; 4]).unwrap();
        let img = to_image_map(&pm, 8, 8).unwrap();
        assert!(img.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn image_map_rejects_downsampling() {
        let pm = Map2D::zeros(4, 4).unwrap();
        assert!(to_image_map(&pm, 2, 8).is_err());
    }

    #[test]
    fn permutation_equivariant_over_patches() {
        let t = random_tensor(2, 2, 3, 6, 9);
        // Reverse the patch axis and check the aggregate reverses with it.
        let mut permuted = alloc::vec![0.0; t.values().len()];
        for l in 0..2 {
            for h in 0..2 {
                for tok in 0..3 {
                    for p in 0..6 {
                        let off = ((l * 2 + h) * 3 + tok) * 6;
                        permuted[off + (5 - p)] = t.get(l, h, tok, p);
                    }
                }
            }
        }
        let tp = AttnTensor::new(2, 2, 3, 6, permuted).unwrap();
        let a = aggregate_attention(&t, 2).unwrap();
        let ap = aggregate_attention(&tp, 2).unwrap();
        for p in 0..6 {
            assert!((a[p] - ap[5 - p]).abs() < 1e-12);
        }
    }
}
