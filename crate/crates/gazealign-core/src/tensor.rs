//! 4-D attention tensors as exported from a model, laid out
//! `(layer, head, text_token, image_patch)` row-major.

use alloc::vec::Vec;

use crate::error::{CoreError, Result};

/// Attention weights over image patches for every layer, head, and text token.
///
/// Rows are sub-distributions: each `(layer, head, token)` slice sums to at
/// most 1, the remainder having gone to non-image positions. Values must lie
/// in `[0, 1 + 1e-6]`; row sums above `1 + 1e-4` are reported by
/// [`AttnTensor::max_row_sum`] so loaders can warn without rejecting.
#[derive(Clone, Debug, PartialEq)]
pub struct AttnTensor {
    layers: usize,
    heads: usize,
    text_tokens: usize,
    image_patches: usize,
    values: Vec<f64>,
}

impl AttnTensor {
    pub fn new(
        layers: usize,
        heads: usize,
        text_tokens: usize,
        image_patches: usize,
        values: Vec<f64>,
    ) -> Result<Self> {
        if layers == 0 || heads == 0 || text_tokens == 0 || image_patches == 0 {
            return Err(CoreError::EmptyDims);
        }
        let expected = layers * heads * text_tokens * image_patches;
        if values.len() != expected {
            return Err(CoreError::LengthMismatch {
                expected,
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::NonFinite("AttnTensor values"));
        }
        if values.iter().any(|&v| v < 0.0 || v > 1.0 + 1e-6) {
            return Err(CoreError::ValueOutOfRange(
                "attention weights must lie in [0, 1]",
            ));
        }
        Ok(Self {
            layers,
            heads,
            text_tokens,
            image_patches,
            values,
        })
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    pub fn text_tokens(&self) -> usize {
        self.text_tokens
    }

    pub fn image_patches(&self) -> usize {
        self.image_patches
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, layer: usize, head: usize, token: usize, patch: usize) -> f64 {
        self.values[self.row_offset(layer, head, token) + patch]
    }

    /// The patch row for one `(layer, head, token)` triple.
    #[inline]
    pub fn row(&self, layer: usize, head: usize, token: usize) -> &[f64] {
        let off = self.row_offset(layer, head, token);
        &self.values[off..off + self.image_patches]
    }

    #[inline]
    fn row_offset(&self, layer: usize, head: usize, token: usize) -> usize {
        ((layer * self.heads + head) * self.text_tokens + token) * self.image_patches
    }

    /// Largest row sum across all `(layer, head, token)` slices.
    ///
    /// Loaders warn when this exceeds `1 + 1e-4`.
    pub fn max_row_sum(&self) -> f64 {
        let mut worst = 0.0f64;
        for l in 0..self.layers {
            for h in 0..self.heads {
                for t in 0..self.text_tokens {
                    let s: f64 = self.row(l, h, t).iter().sum();
                    worst = worst.max(s);
                }
            }
        }
        worst
    }
}
