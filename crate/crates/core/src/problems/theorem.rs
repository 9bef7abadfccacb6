//! Block-diagonal quadratics satisfying the clipped descent-lemma hypotheses.
//!
//! The first `⌈εd⌉` coordinates carry Hessian entry `L` and the rest carry
//! `ℓ`, so the full spectral norm is exactly `L` and the norm of the Hessian
//! restricted to the remaining coordinates is exactly `ℓ`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::quadratic::DiagQuadratic;
use crate::clip;
use crate::diffcore::{norm, Objective, ParamVector};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TheoremInstance {
    eps: f64,
    l_bad: f64,
    ell_good: f64,
    bad_count: usize,
    seed: u64,
    quadratic: DiagQuadratic,
}

/// Gradient-uniformity constants measured at one point for one clip fraction.
///
/// `c1 = ‖ĝ‖/‖∇f‖` and `c2 = √d·τ/‖ĝ‖` are the tightest constants for which
/// `‖ĝ‖ ≥ C₁‖∇f‖` and `C₂‖ĝ‖ ≥ √d·τ` hold. Both are `None` at a stationary
/// point, and `c2` is `None` when clipping annihilates the gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Uniformity {
    pub threshold: f64,
    pub clipped: ParamVector,
    pub grad_norm: f64,
    pub clipped_norm: f64,
    pub c1: Option<f64>,
    pub c2: Option<f64>,
}

pub fn make_theorem_instance(
    d: usize,
    eps: f64,
    l_bad: f64,
    ell_good: f64,
    seed: u64,
) -> Result<TheoremInstance> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidInstance(format!("eps must lie in (0,1), got {eps}")));
    }
    if !(ell_good > 0.0 && ell_good < l_bad && l_bad.is_finite()) {
        return Err(Error::InvalidInstance(format!(
            "need 0 < ell_good < L_bad, got ell_good={ell_good}, L_bad={l_bad}"
        )));
    }
    let bad_count = clip::fraction_count(d, eps);
    if bad_count < 1 || bad_count >= d {
        return Err(Error::InvalidInstance(format!(
            "⌈eps·d⌉ = {bad_count} must lie in [1, d) for d = {d}"
        )));
    }
    let diag = (0..d)
        .map(|i| if i < bad_count { l_bad / 2.0 } else { ell_good / 2.0 })
        .collect();
    Ok(TheoremInstance {
        eps,
        l_bad,
        ell_good,
        bad_count,
        seed,
        quadratic: DiagQuadratic::new(diag)?,
    })
}

impl TheoremInstance {
    pub fn dim(&self) -> usize {
        self.quadratic.diag().len()
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Fraction of coordinates actually marked bad, `⌈εd⌉/d`.
    pub fn effective_eps(&self) -> f64 {
        self.bad_count as f64 / self.dim() as f64
    }

    pub fn l_bad(&self) -> f64 {
        self.l_bad
    }

    pub fn ell_good(&self) -> f64 {
        self.ell_good
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn bad_count(&self) -> usize {
        self.bad_count
    }

    pub fn bad_indices(&self) -> std::ops::Range<usize> {
        0..self.bad_count
    }

    pub fn objective(&self) -> &DiagQuadratic {
        &self.quadratic
    }

    pub fn full_spectral_norm(&self) -> f64 {
        self.quadratic.spectral_norm()
    }

    /// Spectral norm of the Hessian with the bad index set removed.
    pub fn remaining_spectral_norm(&self) -> f64 {
        self.quadratic.hessian_diag()[self.bad_count..]
            .iter()
            .cloned()
            .fold(0.0, f64::max)
    }

    /// Seeded starting point with coordinate magnitudes uniform in `[0.5, 1.5]`
    /// and random signs.
    pub fn initial_point(&self) -> ParamVector {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let data = (0..self.dim())
            .map(|_| {
                let mag: f64 = rng.random_range(0.5..1.5);
                if rng.random_bool(0.5) {
                    mag
                } else {
                    -mag
                }
            })
            .collect();
        ParamVector::from_raw(data)
    }

    pub fn uniformity(&self, x: &[f64], clip_fraction: f64) -> Result<Uniformity> {
        let g = self.quadratic.grad(x);
        let g = ParamVector::new(g)?;
        let threshold = clip::threshold(&g, clip_fraction)?;
        let clipped = clip::clip_coordinates(&g, threshold).clipped;
        let grad_norm = g.norm();
        let clipped_norm = norm(&clipped);
        let c1 = (grad_norm > 0.0).then(|| clipped_norm / grad_norm);
        let c2 = (clipped_norm > 0.0).then(|| (self.dim() as f64).sqrt() * threshold / clipped_norm);
        Ok(Uniformity { threshold, clipped, grad_norm, clipped_norm, c1, c2 })
    }
}
