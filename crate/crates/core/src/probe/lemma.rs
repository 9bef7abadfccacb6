//! Numerical check of the clipped gradient-descent lemma.
//!
//! For an instance whose Hessian has `⌈εd⌉` coordinates of curvature `L` and
//! remaining block norm `ℓ`, clipped gradient descent with step
//! `η = 1/((2√ε·L + ℓ)·C₂)` should satisfy
//!
//! ```text
//! f(x_{t+1}) ≤ f(x_t) − C₁² / ((4√ε·L + 2ℓ)·C₂) · ‖∇f(x_t)‖²
//! ```
//!
//! where `C₁ = ‖ĝ‖/‖∇f‖` and `C₂ = √d·τ/‖ĝ‖` are measured at every step.
//! Plain gradient descent at `η = 1/L` is run alongside for comparison with
//! its `‖∇f‖²/(2L)` decrement.

use crate::diffcore::{dot, hvp, value, HvpMethod, Objective, ParamVector};
use crate::error::{check_dim, Error, Result};
use crate::optim::apply_update;
use crate::problems::TheoremInstance;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hypotheses {
    /// Clip fraction exceeds the bad-coordinate fraction.
    pub clip_fraction: bool,
    /// Full Hessian spectral norm ≤ L.
    pub smoothness: bool,
    /// Hessian without the bad coordinates has spectral norm ≤ ℓ.
    pub remaining_block: bool,
    /// `C₁ > 0`: clipping leaves a nonzero gradient.
    pub c1_positive: bool,
    /// `C₂` finite.
    pub c2_finite: bool,
}

impl Hypotheses {
    pub fn all(&self) -> bool {
        self.clip_fraction && self.smoothness && self.remaining_block && self.c1_positive && self.c2_finite
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LemmaStep {
    pub step: usize,
    /// `f(x_t)`.
    pub loss: f64,
    /// `f(x_{t+1})`.
    pub lhs: f64,
    pub rhs_bound: f64,
    pub c1: f64,
    pub c2: f64,
    pub eta: f64,
    pub grad_norm_sq: f64,
    /// Normalized directional sharpness of the clipped gradient.
    pub sharpness: f64,
    /// `C₂·(2√ε·L + ℓ)`.
    pub sharpness_bound: f64,
    pub hypotheses: Hypotheses,
    /// True only when every hypothesis holds and `lhs ≤ rhs_bound`.
    pub conclusion: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GdStep {
    pub step: usize,
    pub loss: f64,
    pub next_loss: f64,
    pub decrement: f64,
    /// `‖∇f‖²/(2L)`.
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescentLemmaReport {
    /// Fraction of coordinates in the bad block, `⌈εd⌉/d`.
    pub eps: f64,
    pub l: f64,
    pub ell: f64,
    pub clip_fraction: f64,
    pub steps: Vec<LemmaStep>,
    pub gd: Vec<GdStep>,
}

impl DescentLemmaReport {
    /// Steps where the hypotheses hold but the inequality fails.
    pub fn violations(&self) -> impl Iterator<Item = &LemmaStep> {
        self.steps.iter().filter(|s| s.hypotheses.all() && !s.conclusion)
    }

    pub fn holds(&self) -> bool {
        self.violations().next().is_none()
    }

    pub fn all_hypotheses_hold(&self) -> bool {
        self.steps.iter().all(|s| s.hypotheses.all())
    }
}

pub fn verify_descent_lemma(
    instance: &TheoremInstance,
    x0: &[f64],
    steps: usize,
    clip_fraction: f64,
) -> Result<DescentLemmaReport> {
    check_dim(instance.dim(), x0.len())?;
    if !(clip_fraction > instance.eps()) {
        return Err(Error::contract(format!(
            "clip fraction {clip_fraction} must exceed the bad-coordinate fraction {}",
            instance.eps()
        )));
    }
    if clip_fraction > 1.0 {
        return Err(Error::InvalidParameter(format!("clip fraction {clip_fraction} exceeds 1")));
    }
    let obj = instance.objective();
    let eps = instance.effective_eps();
    let (l, ell) = (instance.l_bad(), instance.ell_good());
    let measured_l = instance.full_spectral_norm();
    let measured_ell = instance.remaining_spectral_norm();
    let curvature = 2.0 * eps.sqrt() * l + ell;

    let mut x = ParamVector::new(x0.to_vec())?;
    let mut records = Vec::with_capacity(steps);
    for step in 0..steps {
        let loss = value(obj, &x)?;
        let u = instance.uniformity(&x, clip_fraction)?;
        let grad_norm_sq = u.grad_norm * u.grad_norm;

        if u.grad_norm == 0.0 {
            // Stationary point: no move, both sides equal f(x_t).
            let hypotheses = Hypotheses {
                clip_fraction: true,
                smoothness: measured_l <= l,
                remaining_block: measured_ell <= ell,
                c1_positive: true,
                c2_finite: true,
            };
            records.push(LemmaStep {
                step,
                loss,
                lhs: loss,
                rhs_bound: loss,
                c1: 1.0,
                c2: 1.0,
                eta: 1.0 / curvature,
                grad_norm_sq,
                sharpness: 0.0,
                sharpness_bound: curvature,
                hypotheses,
                conclusion: hypotheses.all(),
            });
            continue;
        }

        let c1 = u.c1.unwrap_or(0.0);
        let c2 = u.c2.unwrap_or(f64::INFINITY);
        let hypotheses = Hypotheses {
            clip_fraction: true,
            smoothness: measured_l <= l,
            remaining_block: measured_ell <= ell,
            c1_positive: c1 > 0.0,
            c2_finite: c2.is_finite(),
        };
        if !(hypotheses.c1_positive && hypotheses.c2_finite) {
            records.push(LemmaStep {
                step,
                loss,
                lhs: loss,
                rhs_bound: f64::NAN,
                c1,
                c2,
                eta: 0.0,
                grad_norm_sq,
                sharpness: f64::NAN,
                sharpness_bound: f64::NAN,
                hypotheses,
                conclusion: false,
            });
            continue;
        }

        let eta = 1.0 / (curvature * c2);
        let next = apply_update(&x, &u.clipped, eta)?;
        let lhs = value(obj, &next)?;
        let rhs_bound = loss - c1 * c1 / (2.0 * curvature * c2) * grad_norm_sq;
        let v = u.clipped.scaled(1.0 / u.clipped_norm);
        let sharpness = dot(&v, &hvp(obj, &v, &v, HvpMethod::Analytic)?);
        records.push(LemmaStep {
            step,
            loss,
            lhs,
            rhs_bound,
            c1,
            c2,
            eta,
            grad_norm_sq,
            sharpness,
            sharpness_bound: c2 * curvature,
            hypotheses,
            conclusion: hypotheses.all() && lhs <= rhs_bound,
        });
        x = next;
    }

    Ok(DescentLemmaReport {
        eps,
        l: measured_l,
        ell: measured_ell,
        clip_fraction,
        steps: records,
        gd: gradient_descent_check(obj, x0, steps, measured_l)?,
    })
}

/// Plain gradient descent at `η = 1/L`, recording each decrement against
/// `‖∇f‖²/(2L)`.
pub fn gradient_descent_check<O: Objective + ?Sized>(
    obj: &O,
    x0: &[f64],
    steps: usize,
    l: f64,
) -> Result<Vec<GdStep>> {
    if !(l > 0.0 && l.is_finite()) {
        return Err(Error::InvalidParameter(format!("smoothness constant must be positive, got {l}")));
    }
    check_dim(obj.dim(), x0.len())?;
    let eta = 1.0 / l;
    let mut x = ParamVector::new(x0.to_vec())?;
    let mut out = Vec::with_capacity(steps);
    for step in 0..steps {
        let loss = value(obj, &x)?;
        let g = crate::diffcore::gradient(obj, &x)?;
        let next = apply_update(&x, &g, eta)?;
        let next_loss = value(obj, &next)?;
        out.push(GdStep {
            step,
            loss,
            next_loss,
            decrement: loss - next_loss,
            bound: g.dot(&g) / (2.0 * l),
        });
        x = next;
    }
    Ok(out)
}
