//! Gaze-alignment losses with exact gradients.
//!
//! Each loss returns the scalar value together with its elementwise
//! derivative with respect to the predicted map, verified against central
//! finite differences by [`finite_diff_check`]. Predicted values are clamped
//! to `[clamp_eps, 1 - clamp_eps]` before any logarithm, and the gradient is
//! zero at clamped coordinates.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::fmath;
use crate::grid::{Map2D, ProbMap};

/// Which alignment loss to evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    Wmse,
    Kld,
    Focal,
    DiceBce,
}

/// Loss hyperparameters. Defaults: `alpha = 1.1`, `gamma = 2`,
/// `lambda_dice = 100`, `lambda_bce = 1`, `eps = 1e-8`, `clamp_eps = 1e-7`,
/// `scale = 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossConfig {
    /// Weighting offset in `w_i = 1 / (alpha - G_i)`; must exceed 1.
    pub alpha: f64,
    /// Focusing exponent of the focal loss.
    pub gamma: f64,
    pub lambda_dice: f64,
    pub lambda_bce: f64,
    /// Stability constant inside the Dice ratio and the KLD denominator.
    pub eps: f64,
    /// Predicted values are clamped to `[clamp_eps, 1 - clamp_eps]` before logs.
    pub clamp_eps: f64,
    /// Magnitude-alignment coefficient applied by the combined objective.
    pub scale: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            alpha: 1.1,
            gamma: 2.0,
            lambda_dice: 100.0,
            lambda_bce: 1.0,
            eps: 1e-8,
            clamp_eps: 1e-7,
            scale: 1.0,
        }
    }
}

impl LossConfig {
    fn validate(&self) -> Result<()> {
        if !(self.alpha > 1.0) {
            return Err(CoreError::BadParam {
                name: "alpha",
                value: self.alpha,
            });
        }
        if !(self.gamma >= 0.0) {
            return Err(CoreError::BadParam {
                name: "gamma",
                value: self.gamma,
            });
        }
        if !(self.eps > 0.0) {
            return Err(CoreError::BadParam {
                name: "eps",
                value: self.eps,
            });
        }
        if !(self.clamp_eps > 0.0 && self.clamp_eps < 0.5) {
            return Err(CoreError::BadParam {
                name: "clamp_eps",
                value: self.clamp_eps,
            });
        }
        Ok(())
    }
}

/// Scalar loss plus its gradient with respect to the predicted map.
#[derive(Clone, Debug)]
pub struct LossResult {
    pub loss: f64,
    pub grad: Map2D,
}

fn check_unit_range(m: &Map2D, what: &'static str) -> Result<()> {
    if m.values().iter().any(|&v| v < -1e-9 || v > 1.0 + 1e-9) {
        return Err(CoreError::ValueOutOfRange(what));
    }
    Ok(())
}

/// Weighted MSE: `(1/N) * sum w_i (G_i - A_i)^2` with `w_i = 1/(alpha - G_i)`.
///
/// The weight grows with gaze density, so errors on strongly fixated pixels
/// dominate. Both maps must lie in `[0, 1]`.
pub fn wmse(g: &Map2D, a: &Map2D, cfg: &LossConfig) -> Result<LossResult> {
    cfg.validate()?;
    g.check_same_dims(a)?;
    check_unit_range(g, "wmse expects g in [0,1]")?;
    check_unit_range(a, "wmse expects a in [0,1]")?;
    let (loss, grad) = wmse_raw(g.values(), a.values(), cfg);
    Ok(LossResult {
        loss,
        grad: Map2D::new(a.height(), a.width(), grad)?,
    })
}

fn wmse_raw(g: &[f64], a: &[f64], cfg: &LossConfig) -> (f64, Vec<f64>) {
    let n = g.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; g.len()];
    for (i, (&gi, &ai)) in g.iter().zip(a).enumerate() {
        let w = 1.0 / (cfg.alpha - gi);
        let r = gi - ai;
        loss += w * r * r;
        grad[i] = -2.0 * w * r / n;
    }
    (loss / n, grad)
}

/// KL divergence as a loss: `sum G_i ln(G_i / (A_i + eps))` over two
/// distribution-normalized maps, gaze as the reference. `0 * ln 0` counts as
/// zero. The gradient is with respect to the normalized prediction; chaining
/// through any upstream normalization is the caller's responsibility.
pub fn kld_loss(g: &ProbMap, a: &ProbMap, cfg: &LossConfig) -> Result<LossResult> {
    cfg.validate()?;
    let gm = g.as_map();
    let am = a.as_map();
    gm.check_same_dims(am)?;
    let (loss, grad) = kld_raw(gm.values(), am.values(), cfg);
    Ok(LossResult {
        loss,
        grad: Map2D::new(am.height(), am.width(), grad)?,
    })
}

fn kld_raw(g: &[f64], a: &[f64], cfg: &LossConfig) -> (f64, Vec<f64>) {
    let mut loss = 0.0;
    let mut grad = vec![0.0; g.len()];
    for (i, (&gi, &ai)) in g.iter().zip(a).enumerate() {
        let denom = ai + cfg.eps;
        if gi > 0.0 {
            loss += gi * fmath::ln(gi / denom);
        }
        grad[i] = -gi / denom;
    }
    (loss, grad)
}

/// Focal loss over soft targets:
/// `-sum [ G (1-A)^gamma ln A + (1-G) A^gamma ln(1-A) ]`.
pub fn focal(g: &Map2D, a: &Map2D, cfg: &LossConfig) -> Result<LossResult> {
    cfg.validate()?;
    g.check_same_dims(a)?;
    check_unit_range(g, "focal expects g in [0,1]")?;
    let (loss, grad) = focal_raw(g.values(), a.values(), cfg);
    Ok(LossResult {
        loss,
        grad: Map2D::new(a.height(), a.width(), grad)?,
    })
}

fn focal_raw(g: &[f64], a: &[f64], cfg: &LossConfig) -> (f64, Vec<f64>) {
    let gamma = cfg.gamma;
    let lo = cfg.clamp_eps;
    let hi = 1.0 - cfg.clamp_eps;
    let mut loss = 0.0;
    let mut grad = vec![0.0; g.len()];
    for (i, (&gi, &ai_raw)) in g.iter().zip(a).enumerate() {
        let clamped = ai_raw < lo || ai_raw > hi;
        let ai = ai_raw.clamp(lo, hi);
        let one_m = 1.0 - ai;
        let ln_a = fmath::ln(ai);
        let ln_1m = fmath::ln(one_m);
        let pow_1m = fmath::powf(one_m, gamma);
        let pow_a = fmath::powf(ai, gamma);
        loss -= gi * pow_1m * ln_a + (1.0 - gi) * pow_a * ln_1m;
        if !clamped {
            // d/dA of the two terms above, negated.
            let d1 = gi * (gamma * fmath::powf(one_m, gamma - 1.0) * ln_a - pow_1m / ai);
            let d2 = (1.0 - gi) * (pow_a / one_m - gamma * fmath::powf(ai, gamma - 1.0) * ln_1m);
            grad[i] = d1 + d2;
        }
    }
    (loss, grad)
}

/// Dice + BCE: `lambda_dice * (1 - (2 sum GA + eps)/(sum G + sum A + eps))
/// + lambda_bce * (-sum [G ln A + (1-G) ln(1-A)])`.
///
/// The Dice ratio uses the raw prediction; only the BCE term sees the
/// clamped values.
pub fn dice_bce(g: &Map2D, a: &Map2D, cfg: &LossConfig) -> Result<LossResult> {
    cfg.validate()?;
    g.check_same_dims(a)?;
    check_unit_range(g, "dice_bce expects g in [0,1]")?;
    let (loss, grad) = dice_bce_raw(g.values(), a.values(), cfg);
    Ok(LossResult {
        loss,
        grad: Map2D::new(a.height(), a.width(), grad)?,
    })
}

fn dice_bce_raw(g: &[f64], a: &[f64], cfg: &LossConfig) -> (f64, Vec<f64>) {
    let lo = cfg.clamp_eps;
    let hi = 1.0 - cfg.clamp_eps;

    let sum_g: f64 = g.iter().sum();
    let sum_a: f64 = a.iter().sum();
    let sum_ga: f64 = g.iter().zip(a).map(|(x, y)| x * y).sum();
    let num = 2.0 * sum_ga + cfg.eps;
    let den = sum_g + sum_a + cfg.eps;
    let dice = 1.0 - num / den;

    let mut bce = 0.0;
    let mut grad = vec![0.0; g.len()];
    for (i, (&gi, &ai_raw)) in g.iter().zip(a).enumerate() {
        let clamped = ai_raw < lo || ai_raw > hi;
        let ai = ai_raw.clamp(lo, hi);
        bce -= gi * fmath::ln(ai) + (1.0 - gi) * fmath::ln(1.0 - ai);
        let d_dice = (num - 2.0 * gi * den) / (den * den);
        let d_bce = if clamped {
            0.0
        } else {
            -gi / ai + (1.0 - gi) / (1.0 - ai)
        };
        grad[i] = cfg.lambda_dice * d_dice + cfg.lambda_bce * d_bce;
    }
    (cfg.lambda_dice * dice + cfg.lambda_bce * bce, grad)
}

/// The joint objective: `lambda1 * lm_loss + lambda2 * attn.loss * scale`.
pub fn combined_objective(
    lm_loss: f64,
    attn: &LossResult,
    lambda1: f64,
    lambda2: f64,
    scale: f64,
) -> f64 {
    lambda1 * lm_loss + lambda2 * attn.loss * scale
}

fn eval_loss_value(kind: LossKind, g: &[f64], a: &[f64], cfg: &LossConfig) -> f64 {
    match kind {
        LossKind::Wmse => wmse_raw(g, a, cfg).0,
        LossKind::Kld => kld_raw(g, a, cfg).0,
        LossKind::Focal => focal_raw(g, a, cfg).0,
        LossKind::DiceBce => dice_bce_raw(g, a, cfg).0,
    }
}

fn eval_loss_grad(kind: LossKind, g: &[f64], a: &[f64], cfg: &LossConfig) -> Vec<f64> {
    match kind {
        LossKind::Wmse => wmse_raw(g, a, cfg).1,
        LossKind::Kld => kld_raw(g, a, cfg).1,
        LossKind::Focal => focal_raw(g, a, cfg).1,
        LossKind::DiceBce => dice_bce_raw(g, a, cfg).1,
    }
}

/// Central-difference gradient check.
///
/// Perturbs each pixel of `a` by `+-h`, compares against the analytic
/// gradient, and returns the maximum over pixels of
/// `|numeric - analytic| / (|analytic| + 1e-8)`. The prediction must sit
/// inside the loss's valid domain by at least `2h` so the clamp stays
/// inactive; for [`LossKind::Kld`] pass distribution-valued maps.
pub fn finite_diff_check(
    kind: LossKind,
    g: &Map2D,
    a: &Map2D,
    cfg: &LossConfig,
    h: f64,
) -> Result<f64> {
    cfg.validate()?;
    g.check_same_dims(a)?;
    if !(h > 0.0) {
        return Err(CoreError::BadParam { name: "h", value: h });
    }
    let analytic = eval_loss_grad(kind, g.values(), a.values(), cfg);
    let mut probe = a.values().to_vec();
    let mut worst = 0.0f64;
    for i in 0..probe.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let plus = eval_loss_value(kind, g.values(), &probe, cfg);
        probe[i] = orig - h;
        let minus = eval_loss_value(kind, g.values(), &probe, cfg);
        probe[i] = orig;
        let numeric = (plus - minus) / (2.0 * h);
        let rel = fmath::abs(numeric - analytic[i]) / (fmath::abs(analytic[i]) + 1e-8);
        worst = worst.max(rel);
    }
    Ok(worst)
}
