//! Core algorithms for aligning model attention with human gaze.
//!
//! Everything in this crate is pure computation over dense `f64` grids:
//! fixation processing and gaze-map construction, attention-tensor
//! aggregation, alignment losses with exact gradients, saliency agreement
//! metrics, gaze-driven image perturbation, and a small cross-attention
//! classifier whose attention can be supervised with gaze targets.
//!
//! The crate is `no_std` (with `alloc`); all IO, file formats, and the CLI
//! live in the companion `gazealign-cli` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod attention;
pub mod blur;
pub mod error;
mod fmath;
pub mod gaze;
pub mod grid;
pub mod loss;
pub mod metrics;
pub mod perturb;
pub mod tensor;
pub mod toy;

pub use attention::{aggregate_attention, to_image_map, to_patch_map, PatchGrid};
pub use blur::{gaussian_blur, gaussian_blur_fixed};
pub use error::{CoreError, Result};
pub use gaze::{
    accumulate_fixations, build_gaze_map, detect_fixations_idt, filter_samples, filter_sessions,
    log_transform, Fixation, GazeSample, Session,
};
pub use grid::{bilinear_resize, dist_normalize, minmax_normalize, Map2D, ProbMap};
pub use loss::{
    combined_objective, dice_bce, finite_diff_check, focal, kld_loss, wmse, LossConfig, LossKind,
    LossResult,
};
pub use metrics::{cc, compare, kl_div, sim, MetricReport};
pub use perturb::{apply_mask, apply_region_blur, gaze_mask, BinaryMask};
pub use tensor::AttnTensor;
