//! Agreement metrics between a gaze map and an attention map: Pearson
//! correlation (CC), KL divergence, and histogram intersection (SIM).
//!
//! KL and SIM normalize internally with [`dist_normalize`], so callers may
//! pass raw maps and reports stay reproducible from files alone. KL is
//! asymmetric: the gaze map is always the reference distribution.

use crate::error::{CoreError, Result};
use crate::fmath;
use crate::grid::{dist_normalize, Map2D, EPS_FLOOR_DEFAULT};

/// The three agreement scores for one map pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricReport {
    /// Pearson correlation, in `[-1, 1]`.
    pub cc: f64,
    /// KL divergence of the attention distribution from the gaze
    /// distribution, `>= 0`.
    pub kl: f64,
    /// Histogram intersection, in `[0, 1]`.
    pub sim: f64,
}

/// Pearson correlation over flattened maps.
///
/// Invariant under positive affine transforms of either argument. Errors if
/// either map is constant, where the correlation is undefined; a silent zero
/// would hide degenerate extractions such as the all-zero map a flat
/// attention tensor normalizes to.
pub fn cc(g: &Map2D, a: &Map2D) -> Result<f64> {
    g.check_same_dims(a)?;
    let n = g.len() as f64;
    let mean_g = g.sum() / n;
    let mean_a = a.sum() / n;
    let mut cov = 0.0;
    let mut var_g = 0.0;
    let mut var_a = 0.0;
    for (&x, &y) in g.values().iter().zip(a.values()) {
        let dx = x - mean_g;
        let dy = y - mean_a;
        cov += dx * dy;
        var_g += dx * dx;
        var_a += dy * dy;
    }
    if var_g == 0.0 || var_a == 0.0 {
        return Err(CoreError::ConstantInput);
    }
    Ok(cov / fmath::sqrt(var_g * var_a))
}

/// `sum P_g ln(P_g / P_a)` over distribution-normalized maps, gaze as
/// reference. Non-negative up to the floor-induced slack.
pub fn kl_div(g: &Map2D, a: &Map2D, eps_floor: f64) -> Result<f64> {
    g.check_same_dims(a)?;
    let pg = dist_normalize(g, eps_floor)?;
    let pa = dist_normalize(a, eps_floor)?;
    let mut total = 0.0;
    for (&p, &q) in pg.values().iter().zip(pa.values()) {
        if p > 0.0 {
            total += p * fmath::ln(p / q);
        }
    }
    Ok(total)
}

/// Histogram intersection: `sum min(P_g, P_a)` over distribution-normalized
/// maps. 1 means identical distributions, 0 disjoint support.
pub fn sim(g: &Map2D, a: &Map2D) -> Result<f64> {
    g.check_same_dims(a)?;
    let pg = dist_normalize(g, EPS_FLOOR_DEFAULT)?;
    let pa = dist_normalize(a, EPS_FLOOR_DEFAULT)?;
    Ok(pg
        .values()
        .iter()
        .zip(pa.values())
        .map(|(&p, &q)| p.min(q))
        .sum())
}

/// All three metrics for one pair, KL at the default floor.
pub fn compare(g: &Map2D, a: &Map2D) -> Result<MetricReport> {
    Ok(MetricReport {
        cc: cc(g, a)?,
        kl: kl_div(g, a, EPS_FLOOR_DEFAULT)?,
        sim: sim(g, a)?,
    })
}
