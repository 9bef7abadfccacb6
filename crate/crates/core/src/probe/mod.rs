//! Directional sharpness, gradient correlation, landscape scans, coordinate
//! histograms and the clipped descent-lemma verifier.

mod histogram;
mod landscape;
mod lemma;
mod sharpness;

use serde::{Deserialize, Serialize};

pub use histogram::{coordinate_histogram, decade_edges, HistogramBin};
pub use landscape::{landscape_scan, log_grid, Landscape, LandscapePoint};
pub use lemma::{
    gradient_descent_check, verify_descent_lemma, DescentLemmaReport, GdStep, Hypotheses, LemmaStep,
};
pub use sharpness::{directional_sharpness, gradient_correlation, Sharpness};

use crate::diffcore::{value, HvpMethod, Objective, ParamVector};
use crate::error::{Error, Result};

pub const DEFAULT_ROBUST_DELTA: f64 = 0.01;
pub const DEFAULT_GRID_MIN: f64 = 1e-6;
pub const DEFAULT_GRID_MAX: f64 = 10.0;
pub const DEFAULT_GRID_POINTS: usize = 60;

fn default_delta() -> f64 {
    DEFAULT_ROBUST_DELTA
}

fn default_grid() -> Vec<f64> {
    log_grid(DEFAULT_GRID_MIN, DEFAULT_GRID_MAX, DEFAULT_GRID_POINTS).expect("default grid is valid")
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSpec {
    #[serde(default)]
    pub hvp: HvpMethod,
    /// Shift used by the robust sharpness fallback.
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Landscape step sizes, strictly increasing.
    #[serde(default = "default_grid")]
    pub grid: Vec<f64>,
    #[serde(default = "yes")]
    pub normalize: bool,
}

impl Default for ProbeSpec {
    fn default() -> Self {
        Self { hvp: HvpMethod::Auto, delta: DEFAULT_ROBUST_DELTA, grid: default_grid(), normalize: true }
    }
}

impl ProbeSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::InvalidParameter(format!("robust shift must be positive, got {}", self.delta)));
        }
        if self.grid.is_empty() {
            return Err(Error::InvalidParameter("landscape grid is empty".into()));
        }
        if self.grid.iter().any(|&e| !(e > 0.0 && e.is_finite()))
            || self.grid.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(Error::InvalidParameter(
                "landscape grid must be positive and strictly increasing".into(),
            ));
        }
        if let HvpMethod::CentralDifference { step: Some(h) } = self.hvp {
            HvpMethod::central(h)?;
        }
        Ok(())
    }
}

/// Probe results for one candidate direction.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeRecord {
    pub label: String,
    /// Sharpness after the negative-curvature fallback.
    pub sharpness: f64,
    pub raw_sharpness: f64,
    pub robust_used: bool,
    pub gradient_correlation: f64,
    pub landscape: Landscape,
    /// `sharpness / baseline sharpness`; exactly 1 for the baseline itself.
    pub ratio_to_baseline: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeReport {
    pub loss: f64,
    pub baseline: Option<String>,
    pub records: Vec<ProbeRecord>,
}

impl ProbeReport {
    pub fn get(&self, label: &str) -> Option<&ProbeRecord> {
        self.records.iter().find(|r| r.label == label)
    }
}

/// Probes every candidate direction at `x`.
///
/// A zero direction has no sharpness or landscape; its record carries NaN
/// values and a landscape flat at `f(x)`. Ratios are taken against the record
/// labelled `baseline`; without a baseline they are NaN.
pub fn probe_directions<O: Objective + ?Sized>(
    obj: &O,
    x: &[f64],
    candidates: &[(String, ParamVector)],
    baseline: Option<&str>,
    spec: &ProbeSpec,
) -> Result<ProbeReport> {
    spec.validate()?;
    let loss = value(obj, x)?;
    let mut records = Vec::with_capacity(candidates.len());
    for (label, u) in candidates {
        if u.iter().all(|&v| v == 0.0) {
            records.push(ProbeRecord {
                label: label.clone(),
                sharpness: f64::NAN,
                raw_sharpness: f64::NAN,
                robust_used: false,
                gradient_correlation: f64::NAN,
                landscape: Landscape {
                    baseline: loss,
                    points: spec.grid.iter().map(|&eta| LandscapePoint { eta, loss }).collect(),
                },
                ratio_to_baseline: f64::NAN,
            });
            continue;
        }
        let s = directional_sharpness(obj, x, u, spec)?;
        records.push(ProbeRecord {
            label: label.clone(),
            sharpness: s.value,
            raw_sharpness: s.raw,
            robust_used: s.robust_used,
            gradient_correlation: gradient_correlation(obj, x, u)?,
            landscape: landscape_scan(obj, x, u, spec)?,
            ratio_to_baseline: f64::NAN,
        });
    }
    if let Some(name) = baseline {
        let reference = records
            .iter()
            .find(|r| r.label == name)
            .map(|r| r.sharpness)
            .ok_or_else(|| Error::InvalidParameter(format!("baseline direction `{name}` not among candidates")))?;
        for r in &mut records {
            r.ratio_to_baseline = if r.label == name { 1.0 } else { r.sharpness / reference };
        }
    }
    Ok(ProbeReport { loss, baseline: baseline.map(str::to_owned), records })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::make_intro_quadratic;

    fn pv(v: &[f64]) -> ParamVector {
        ParamVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn baseline_ratio_is_exactly_one() {
        let q = make_intro_quadratic(2).unwrap();
        let cands = vec![
            ("sgd".to_string(), pv(&[200.0, 2.0])),
            ("clipped".to_string(), pv(&[2.0, 2.0])),
            ("zero".to_string(), pv(&[0.0, 0.0])),
        ];
        let report = probe_directions(&q, &[1.0, 1.0], &cands, Some("sgd"), &ProbeSpec::default()).unwrap();
        assert_eq!(report.loss, 101.0);
        let sgd = report.get("sgd").unwrap();
        assert_eq!(sgd.ratio_to_baseline, 1.0);
        assert_eq!(sgd.landscape.points.len(), DEFAULT_GRID_POINTS);
        let clipped = report.get("clipped").unwrap();
        assert!((clipped.sharpness - 101.0).abs() < 1e-12);
        assert!(clipped.ratio_to_baseline < 1.0);
        let zero = report.get("zero").unwrap();
        assert!(zero.sharpness.is_nan());
        assert!(zero.landscape.points.iter().all(|p| p.loss == 101.0));
    }

    #[test]
    fn missing_baseline_is_an_error() {
        let q = make_intro_quadratic(2).unwrap();
        let cands = vec![("adam".to_string(), pv(&[1.0, 1.0]))];
        assert!(probe_directions(&q, &[1.0, 1.0], &cands, Some("sgd"), &ProbeSpec::default()).is_err());
        let r = probe_directions(&q, &[1.0, 1.0], &cands, None, &ProbeSpec::default()).unwrap();
        assert!(r.records[0].ratio_to_baseline.is_nan());
    }

    #[test]
    fn spec_validation() {
        assert!(ProbeSpec::default().validate().is_ok());
        assert!(ProbeSpec { delta: 0.0, ..ProbeSpec::default() }.validate().is_err());
        assert!(ProbeSpec { grid: vec![1.0, 1.0], ..ProbeSpec::default() }.validate().is_err());
        assert!(ProbeSpec { grid: vec![], ..ProbeSpec::default() }.validate().is_err());
    }

    #[test]
    fn spec_defaults_fill_in_from_json() {
        let spec: ProbeSpec = serde_json::from_str(r#"{"delta":0.02}"#).unwrap();
        assert_eq!(spec.delta, 0.02);
        assert_eq!(spec.grid.len(), DEFAULT_GRID_POINTS);
        assert!(spec.normalize);
        assert!(serde_json::from_str::<ProbeSpec>(r#"{"deltas":0.02}"#).is_err());
    }
}
