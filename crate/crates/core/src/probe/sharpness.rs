use crate::diffcore::{dot, gradient, hvp, Objective, ParamVector};
use crate::error::{Error, Result};

use super::ProbeSpec;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sharpness {
    /// Reported value: `raw` unless it was negative, then the shifted estimate.
    pub value: f64,
    /// `vᵀ∇²f(x)v` at the probe point.
    pub raw: f64,
    pub robust_used: bool,
}

pub(crate) fn probe_direction(u: &[f64], normalize: bool) -> Result<ParamVector> {
    let u = ParamVector::new(u.to_vec())?;
    if u.iter().all(|&v| v == 0.0) {
        return Err(Error::contract("probe direction is the zero vector"));
    }
    if normalize {
        u.normalized()
            .ok_or_else(|| Error::NumericOverflow("direction norm overflows".into()))
    } else {
        Ok(u)
    }
}

/// `vᵀ∇²f(x)v` with `v = u/‖u‖` when `spec.normalize`. A strictly negative
/// value is replaced by `vᵀ∇²f(x + δv)v`.
pub fn directional_sharpness<O: Objective + ?Sized>(
    obj: &O,
    x: &[f64],
    u: &[f64],
    spec: &ProbeSpec,
) -> Result<Sharpness> {
    let v = probe_direction(u, spec.normalize)?;
    let raw = dot(&v, &hvp(obj, x, &v, spec.hvp)?);
    if raw >= 0.0 {
        return Ok(Sharpness { value: raw, raw, robust_used: false });
    }
    let shifted: Vec<f64> = x.iter().zip(v.iter()).map(|(xi, vi)| xi + spec.delta * vi).collect();
    let robust = dot(&v, &hvp(obj, &shifted, &v, spec.hvp)?);
    Ok(Sharpness { value: robust, raw, robust_used: true })
}

/// `∇f(x)·u/‖u‖`.
pub fn gradient_correlation<O: Objective + ?Sized>(obj: &O, x: &[f64], u: &[f64]) -> Result<f64> {
    let v = probe_direction(u, true)?;
    Ok(gradient(obj, x)?.dot(&v))
}
