//! Raw eye-tracker samples to smoothed, normalized gaze maps.
//!
//! The pipeline mirrors how gaze ground truth is usually prepared: drop
//! invalid samples, detect fixations (dispersion-threshold I-DT when only raw
//! samples are available), accumulate per-pixel fixation duration, compress
//! with `ln(1 + t)`, smooth with a Gaussian, and min-max normalize.

use alloc::string::String;
use alloc::vec::Vec;

use crate::blur::gaussian_blur;
use crate::error::{CoreError, Result};
use crate::fmath;
use crate::grid::{minmax_normalize, Map2D};

/// One eye-tracker record: time in microseconds, screen position in pixels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GazeSample {
    pub t_us: i64,
    pub x_px: f64,
    pub y_px: f64,
    pub valid: bool,
}

/// A detected fixation: centroid, onset, and dwell time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Fixation {
    pub x_px: f64,
    pub y_px: f64,
    pub start_us: i64,
    pub duration_ms: f64,
}

/// One viewing session over a chart.
#[derive(Clone, Debug)]
pub struct Session {
    pub id: String,
    pub fixations: Vec<Fixation>,
    pub height: usize,
    pub width: usize,
}

impl Session {
    /// Total viewing time, the sum of fixation durations.
    pub fn total_view_ms(&self) -> f64 {
        self.fixations.iter().map(|f| f.duration_ms).sum()
    }
}

/// Keeps valid samples with finite coordinates inside `height x width`.
/// Order is preserved; the result may be empty.
pub fn filter_samples(samples: &[GazeSample], height: usize, width: usize) -> Vec<GazeSample> {
    samples
        .iter()
        .filter(|s| {
            s.valid
                && s.x_px.is_finite()
                && s.y_px.is_finite()
                && s.x_px >= 0.0
                && s.y_px >= 0.0
                && s.x_px < width as f64
                && s.y_px < height as f64
        })
        .copied()
        .collect()
}

/// Dispersion-threshold (I-DT) fixation detection.
///
/// A window of consecutive samples becomes a fixation when it spans at least
/// `min_dur_ms` while both `max(x) - min(x)` and `max(y) - min(y)` stay
/// within `dispersion_px`. Windows are grown greedily, so fixations never
/// overlap; the centroid is the mean of member samples and the duration the
/// window's time span.
pub fn detect_fixations_idt(
    samples: &[GazeSample],
    dispersion_px: f64,
    min_dur_ms: f64,
) -> Result<Vec<Fixation>> {
    if !(dispersion_px > 0.0) || !dispersion_px.is_finite() {
        return Err(CoreError::BadParam {
            name: "dispersion_px",
            value: dispersion_px,
        });
    }
    if !(min_dur_ms > 0.0) || !min_dur_ms.is_finite() {
        return Err(CoreError::BadParam {
            name: "min_dur_ms",
            value: min_dur_ms,
        });
    }
    let min_dur_us = min_dur_ms * 1000.0;
    let mut fixations = Vec::new();
    let n = samples.len();
    let mut start = 0;
    while start < n {
        // Smallest window starting here that covers the duration threshold.
        let mut end = start;
        while end + 1 < n && ((samples[end].t_us - samples[start].t_us) as f64) < min_dur_us {
            end += 1;
        }
        if ((samples[end].t_us - samples[start].t_us) as f64) < min_dur_us {
            break; // remaining samples cannot span the minimum duration
        }
        if dispersion(&samples[start..=end]) <= dispersion_px {
            // Grow until dispersion is exceeded.
            while end + 1 < n && dispersion(&samples[start..=end + 1]) <= dispersion_px {
                end += 1;
            }
            let win = &samples[start..=end];
            let inv = 1.0 / win.len() as f64;
            fixations.push(Fixation {
                x_px: win.iter().map(|s| s.x_px).sum::<f64>() * inv,
                y_px: win.iter().map(|s| s.y_px).sum::<f64>() * inv,
                start_us: samples[start].t_us,
                duration_ms: (samples[end].t_us - samples[start].t_us) as f64 / 1000.0,
            });
            start = end + 1;
        } else {
            start += 1;
        }
    }
    Ok(fixations)
}

/// Largest per-axis spatial extent of a sample window.
fn dispersion(win: &[GazeSample]) -> f64 {
    let mut min_x = f64::INFINITY;
    let mut max_x = f64::NEG_INFINITY;
    let mut min_y = f64::INFINITY;
    let mut max_y = f64::NEG_INFINITY;
    for s in win {
        min_x = min_x.min(s.x_px);
        max_x = max_x.max(s.x_px);
        min_y = min_y.min(s.y_px);
        max_y = max_y.max(s.y_px);
    }
    (max_x - min_x).max(max_y - min_y)
}

/// Sums fixation durations into per-pixel bins.
///
/// Centroids are mapped with round-half-up and clamped to the nearest edge
/// pixel, so off-chart fixations still contribute.
pub fn accumulate_fixations(fixations: &[Fixation], height: usize, width: usize) -> Result<Map2D> {
    let mut m = Map2D::zeros(height, width)?;
    for f in fixations {
        let x = clamp_px(f.x_px, width);
        let y = clamp_px(f.y_px, height);
        let v = m.get(y, x) + f.duration_ms;
        m.set(y, x, v);
    }
    Ok(m)
}

fn clamp_px(coord: f64, extent: usize) -> usize {
    let r = fmath::floor(coord + 0.5);
    if r <= 0.0 {
        0
    } else if r >= (extent - 1) as f64 {
        extent - 1
    } else {
        r as usize
    }
}

/// `ln(1 + t)` elementwise; keeps zero at zero and preserves value ordering
/// while flattening large dwell-time differences. Input must be >= 0.
pub fn log_transform(m: &Map2D) -> Map2D {
    m.map(fmath::log1p)
}

/// Full gaze-map construction: accumulate, log-compress, smooth, normalize.
pub fn build_gaze_map(
    fixations: &[Fixation],
    height: usize,
    width: usize,
    sigma_px: f64,
) -> Result<Map2D> {
    let acc = accumulate_fixations(fixations, height, width)?;
    let blurred = gaussian_blur(&log_transform(&acc), sigma_px)?;
    Ok(minmax_normalize(&blurred))
}

/// Drops the `floor(n * drop_pct / 100)` sessions with the smallest total
/// viewing time; ties drop the lexicographically smallest id first. The
/// survivors keep their input order. `drop_pct` is clamped to `[0, 100)`.
pub fn filter_sessions(sessions: Vec<Session>, drop_pct: f64) -> Vec<Session> {
    let n = sessions.len();
    let pct = drop_pct.clamp(0.0, 100.0);
    let k = (fmath::floor(n as f64 * pct / 100.0) as usize).min(n);
    if k == 0 {
        return sessions;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        sessions[a]
            .total_view_ms()
            .partial_cmp(&sessions[b].total_view_ms())
            .unwrap_or(core::cmp::Ordering::Equal)
            .then_with(|| sessions[a].id.cmp(&sessions[b].id))
    });
    let mut dropped = alloc::vec![false; n];
    for &i in order.iter().take(k) {
        dropped[i] = true;
    }
    sessions
        .into_iter()
        .enumerate()
        .filter_map(|(i, s)| if dropped[i] { None } else { Some(s) })
        .collect()
}
