//! Coordinate-wise percentile clipping.
//!
//! The threshold is the `m`-th largest absolute coordinate with
//! `m = ⌈fraction·d⌉`. Coordinates strictly above it are replaced by
//! `sgn(g_i)·τ`; ties at `τ` are left alone, which makes the operator
//! idempotent. With `fraction = 1` the threshold is `min|g_i|` and the output
//! is `τ·sgn(g)`, i.e. a scaled sign vector.

use serde::{Deserialize, Serialize};

use crate::diffcore::ParamVector;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClipTarget {
    /// Clip the gradient before it enters the numerator/momentum.
    #[default]
    Gradient,
    /// Clip the final update step produced by the algorithm.
    Update,
}

/// How the threshold is picked from the sorted magnitudes, `m = ⌈fraction·d⌉`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdPolicy {
    /// `τ` is the `m`-th largest `|g_i|`; at most `m − 1` coordinates change.
    #[default]
    OrderStatistic,
    /// `τ` is the `(m+1)`-th largest `|g_i|` (the smallest when `m = d`), so
    /// the top `m` coordinates are brought down to it.
    ExactCount,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClipSpec {
    pub fraction: f64,
    #[serde(default)]
    pub target: ClipTarget,
    #[serde(default)]
    pub policy: ThresholdPolicy,
    #[serde(default = "enabled_default")]
    pub enabled: bool,
}

fn enabled_default() -> bool {
    true
}

impl Default for ClipSpec {
    fn default() -> Self {
        Self::disabled()
    }
}

impl ClipSpec {
    pub fn new(fraction: f64, target: ClipTarget) -> Result<Self> {
        let spec = Self { fraction, target, policy: ThresholdPolicy::OrderStatistic, enabled: true };
        spec.validate()?;
        Ok(spec)
    }

    pub fn gradient(fraction: f64) -> Result<Self> {
        Self::new(fraction, ClipTarget::Gradient)
    }

    pub fn update(fraction: f64) -> Result<Self> {
        Self::new(fraction, ClipTarget::Update)
    }

    pub fn disabled() -> Self {
        Self { fraction: 1.0, target: ClipTarget::Gradient, policy: ThresholdPolicy::OrderStatistic, enabled: false }
    }

    pub fn with_policy(self, policy: ThresholdPolicy) -> Self {
        Self { policy, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.fraction > 0.0 && self.fraction <= 1.0 {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "clip fraction must lie in (0, 1], got {}",
                self.fraction
            )))
        }
    }

    pub(crate) fn applies_to(&self, target: ClipTarget) -> bool {
        self.enabled && self.target == target
    }

    /// Clips `g` when enabled for `target`, otherwise returns it unchanged.
    pub(crate) fn apply(&self, target: ClipTarget, g: &[f64]) -> Result<Vec<f64>> {
        if !self.applies_to(target) {
            return Ok(g.to_vec());
        }
        let tau = threshold_with_policy(g, self.fraction, self.policy)?;
        Ok(clip_coordinates(g, tau).clipped.into_vec())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClipResult {
    pub clipped: ParamVector,
    pub threshold: f64,
    pub clipped_count: usize,
}

/// `m`-th largest `|g_i|` with `m = ⌈fraction·d⌉`.
pub fn threshold(g: &[f64], fraction: f64) -> Result<f64> {
    threshold_with_policy(g, fraction, ThresholdPolicy::OrderStatistic)
}

pub fn threshold_with_policy(g: &[f64], fraction: f64, policy: ThresholdPolicy) -> Result<f64> {
    if g.is_empty() {
        return Err(Error::contract("clip threshold of an empty vector"));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "clip fraction must lie in (0, 1], got {fraction}"
        )));
    }
    let d = g.len();
    let mut m = fraction_count(d, fraction).clamp(1, d);
    if policy == ThresholdPolicy::ExactCount {
        m = (m + 1).min(d);
    }
    let mut mags: Vec<f64> = g.iter().map(|v| v.abs()).collect();
    // m-th largest is the (d − m)-th smallest.
    let (_, tau, _) = mags.select_nth_unstable_by(d - m, f64::total_cmp);
    Ok(*tau)
}

pub fn clip_coordinates(g: &[f64], tau: f64) -> ClipResult {
    debug_assert!(tau >= 0.0, "clip threshold must be non-negative");
    let mut clipped_count = 0;
    let data = g
        .iter()
        .map(|&gi| {
            if gi.abs() > tau {
                clipped_count += 1;
                tau.copysign(gi)
            } else {
                gi
            }
        })
        .collect();
    ClipResult { clipped: ParamVector::from_raw(data), threshold: tau, clipped_count }
}

/// `⌈fraction·d⌉`, guarded against products like `0.07·100 = 7.000000000000001`.
pub(crate) fn fraction_count(d: usize, fraction: f64) -> usize {
    let raw = fraction * d as f64;
    let nearest = raw.round();
    if (raw - nearest).abs() <= 1e-9 * raw.max(1.0) {
        nearest as usize
    } else {
        raw.ceil() as usize
    }
}

/// Threshold then clip.
pub fn clip(g: &[f64], fraction: f64) -> Result<ClipResult> {
    let tau = threshold(g, fraction)?;
    Ok(clip_coordinates(g, tau))
}
