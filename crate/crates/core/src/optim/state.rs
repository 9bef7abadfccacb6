//! Momentum-based states: SGD, normalized SGD, signSGD, Adam and Lion.
//!
//! Every `update` advances the state by one step and returns the unscaled
//! update `u` (the vector multiplied by the learning rate).

use crate::clip::{ClipSpec, ClipTarget};
use crate::diffcore::{norm, ParamVector};
use crate::error::{check_dim, Result};

use super::layout::GroupLayout;

pub(crate) fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `m ← βm + (1−β)ĝ`; shared by SGD, normalized SGD and signSGD.
#[derive(Debug, Clone, PartialEq)]
pub struct SgdMomentumState {
    pub beta: f64,
    pub m: ParamVector,
    pub t: u64,
}

impl SgdMomentumState {
    pub fn new(dim: usize, beta: f64) -> Self {
        Self { beta, m: ParamVector::zeros(dim), t: 0 }
    }

    fn advance(&mut self, g: &[f64], clip: &ClipSpec) -> Result<()> {
        check_dim(self.m.len(), g.len())?;
        let g_hat = clip.apply(ClipTarget::Gradient, g)?;
        let beta = self.beta;
        let m = self.m.iter().zip(&g_hat).map(|(m, g)| beta * m + (1.0 - beta) * g).collect();
        self.m = ParamVector::from_raw(m);
        self.t += 1;
        Ok(())
    }

    /// SGD with momentum: `u = m_t`.
    pub fn sgd_update(&mut self, g: &[f64], clip: &ClipSpec) -> Result<ParamVector> {
        self.advance(g, clip)?;
        finish(self.m.to_vec(), clip)
    }

    /// signSGD with momentum: `u = sgn(m_t)`.
    pub fn sign_update(&mut self, g: &[f64], clip: &ClipSpec) -> Result<ParamVector> {
        self.advance(g, clip)?;
        finish(self.m.iter().map(|&m| sign(m)).collect(), clip)
    }
}

/// Normalized SGD: each group's momentum block rescaled to ℓ₂ norm
/// `√(group size)`. A zero block is left at zero.
pub fn normalized_sgd_update(
    state: &mut SgdMomentumState,
    g: &[f64],
    layout: &GroupLayout,
    clip: &ClipSpec,
) -> Result<ParamVector> {
    layout.check(g.len())?;
    state.advance(g, clip)?;
    let mut u = state.m.to_vec();
    for group in layout.groups() {
        let block = &mut u[group.range()];
        let n = norm(block);
        if n > 0.0 {
            let scale = (group.shape.len() as f64).sqrt() / n;
            block.iter_mut().for_each(|v| *v *= scale);
        }
    }
    finish(u, clip)
}

/// Adam exactly as printed: no bias correction, `ε` inside the square root,
/// clipped gradient in the first moment only.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub m: ParamVector,
    pub v: ParamVector,
    pub t: u64,
}

impl AdamState {
    pub fn new(dim: usize, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            beta1,
            beta2,
            eps,
            m: ParamVector::zeros(dim),
            v: ParamVector::zeros(dim),
            t: 0,
        }
    }

    pub fn update(&mut self, g: &[f64], clip: &ClipSpec) -> Result<ParamVector> {
        check_dim(self.m.len(), g.len())?;
        let g_hat = clip.apply(ClipTarget::Gradient, g)?;
        let (b1, b2) = (self.beta1, self.beta2);
        let m: Vec<f64> = self.m.iter().zip(&g_hat).map(|(m, g)| b1 * m + (1.0 - b1) * g).collect();
        let v: Vec<f64> = self.v.iter().zip(g).map(|(v, g)| b2 * v + (1.0 - b2) * g * g).collect();
        let u = m
            .iter()
            .zip(&v)
            .map(|(&mi, &vi)| {
                let denom = (vi + self.eps).sqrt();
                // v_i = 0 with eps = 0 means every past g_i was zero, hence m_i = 0.
                if denom > 0.0 {
                    mi / denom
                } else {
                    0.0
                }
            })
            .collect();
        self.m = ParamVector::from_raw(m);
        self.v = ParamVector::from_raw(v);
        self.t += 1;
        finish(u, clip)
    }
}

/// Lion: `u = sgn(β₁m + (1−β₁)ĝ)`, then `m ← β₂m + (1−β₂)ĝ`.
///
/// Clipping the update is accepted but inert: percentile clipping of a ±1
/// vector leaves it unchanged. Gradient clipping feeds `ĝ` to both lines.
#[derive(Debug, Clone, PartialEq)]
pub struct LionState {
    pub beta1: f64,
    pub beta2: f64,
    pub m: ParamVector,
    pub t: u64,
}

impl LionState {
    pub fn new(dim: usize, beta1: f64, beta2: f64) -> Self {
        Self { beta1, beta2, m: ParamVector::zeros(dim), t: 0 }
    }

    pub fn update(&mut self, g: &[f64], clip: &ClipSpec) -> Result<ParamVector> {
        check_dim(self.m.len(), g.len())?;
        let g_hat = clip.apply(ClipTarget::Gradient, g)?;
        let (b1, b2) = (self.beta1, self.beta2);
        let u = self.m.iter().zip(&g_hat).map(|(m, g)| sign(b1 * m + (1.0 - b1) * g)).collect();
        let m = self.m.iter().zip(&g_hat).map(|(m, g)| b2 * m + (1.0 - b2) * g).collect();
        self.m = ParamVector::from_raw(m);
        self.t += 1;
        finish(u, clip)
    }
}

fn finish(u: Vec<f64>, clip: &ClipSpec) -> Result<ParamVector> {
    Ok(ParamVector::from_raw(clip.apply(ClipTarget::Update, &u)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clip::ThresholdPolicy;

    #[test]
    fn sgd_without_momentum_returns_gradient() {
        let mut s = SgdMomentumState::new(3, 0.0);
        let u = s.sgd_update(&[0.5, -7.25, 3.0], &ClipSpec::disabled()).unwrap();
        assert_eq!(u.as_slice(), &[0.5, -7.25, 3.0]);
        assert_eq!(s.t, 1);
    }

    #[test]
    fn sgd_momentum_accumulates() {
        let mut s = SgdMomentumState::new(1, 0.5);
        s.sgd_update(&[2.0], &ClipSpec::disabled()).unwrap();
        let u = s.sgd_update(&[4.0], &ClipSpec::disabled()).unwrap();
        // m1 = 1, m2 = 0.5 + 2
        assert_eq!(u.as_slice(), &[2.5]);
    }

    #[test]
    fn sign_sgd_first_step() {
        let mut s = SgdMomentumState::new(3, 0.0);
        let u = s.sign_update(&[4.0, -3.0, 0.0], &ClipSpec::disabled()).unwrap();
        assert_eq!(u.as_slice(), &[1.0, -1.0, 0.0]);
    }

    #[test]
    fn adam_without_moments_is_sign() {
        let mut s = AdamState::new(2, 0.0, 0.0, 0.0);
        let u = s.update(&[4.0, -3.0], &ClipSpec::disabled()).unwrap();
        assert_eq!(u.as_slice(), &[1.0, -1.0]);
    }

    #[test]
    fn adam_clips_numerator_only() {
        let mut s = AdamState::new(2, 0.0, 0.0, 0.0);
        let clip = ClipSpec::gradient(0.5).unwrap().with_policy(ThresholdPolicy::ExactCount);
        let u = s.update(&[4.0, -3.0], &clip).unwrap();
        assert_eq!(u.as_slice(), &[0.75, -1.0]);
        assert_eq!(s.v.as_slice(), &[16.0, 9.0]);
        // With the order-statistic threshold, τ = 4 at d = 2 and nothing is clipped.
        let mut s = AdamState::new(2, 0.0, 0.0, 0.0);
        let u = s.update(&[4.0, -3.0], &ClipSpec::gradient(0.5).unwrap()).unwrap();
        assert_eq!(u.as_slice(), &[1.0, -1.0]);
    }

    #[test]
    fn adam_zero_gradient_with_zero_eps_is_zero() {
        let mut s = AdamState::new(2, 0.9, 0.999, 0.0);
        let u = s.update(&[0.0, 1.0], &ClipSpec::disabled()).unwrap();
        assert_eq!(u[0], 0.0);
        assert!(u[1].is_finite());
    }

    #[test]
    fn normalized_sgd_examples() {
        let layout = GroupLayout::flat(4);
        let mut s = SgdMomentumState { beta: 0.0, m: ParamVector::zeros(4), t: 0 };
        let u = normalized_sgd_update(&mut s, &[2.0, 0.0, 0.0, 0.0], &layout, &ClipSpec::disabled())
            .unwrap();
        assert_eq!(u.as_slice(), &[2.0, 0.0, 0.0, 0.0]);
        let u = normalized_sgd_update(&mut s, &[1.0, 0.0, 0.0, 0.0], &layout, &ClipSpec::disabled())
            .unwrap();
        assert_eq!(u.as_slice(), &[2.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn normalized_sgd_two_groups() {
        let layout = GroupLayout::builder().vector("a", 2).vector("b", 2).build();
        let mut s = SgdMomentumState::new(4, 0.0);
        let u = normalized_sgd_update(&mut s, &[3.0, 4.0, 0.0, -0.1], &layout, &ClipSpec::disabled())
            .unwrap();
        let sq: f64 = u.iter().map(|v| v * v).sum();
        assert!((sq - 4.0).abs() < 1e-12);
        assert!((norm(&u.as_slice()[..2]) - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn normalized_sgd_zero_block_stays_zero() {
        let layout = GroupLayout::builder().vector("a", 2).vector("b", 2).build();
        let mut s = SgdMomentumState::new(4, 0.0);
        let u = normalized_sgd_update(&mut s, &[0.0, 0.0, 1.0, 0.0], &layout, &ClipSpec::disabled())
            .unwrap();
        assert_eq!(u.as_slice(), &[0.0, 0.0, 2f64.sqrt(), 0.0]);
    }

    #[test]
    fn lion_update_is_sign_valued() {
        let mut s = LionState::new(3, 0.9, 0.99);
        let u = s.update(&[0.2, -5.0, 0.0], &ClipSpec::disabled()).unwrap();
        assert_eq!(u.as_slice(), &[1.0, -1.0, 0.0]);
        assert!((s.m[1] - (-0.05)).abs() < 1e-15);
    }

    #[test]
    fn lion_update_clipping_is_inert() {
        let g = [0.2, -5.0, 0.7, 1.0];
        let mut plain = LionState::new(4, 0.9, 0.99);
        let mut clipped = plain.clone();
        let a = plain.update(&g, &ClipSpec::disabled()).unwrap();
        let b = clipped.update(&g, &ClipSpec::update(0.5).unwrap()).unwrap();
        assert!(a.bit_eq(&b));
    }

    #[test]
    fn dimension_mismatch() {
        let mut s = AdamState::new(2, 0.9, 0.999, 1e-8);
        assert!(s.update(&[1.0], &ClipSpec::disabled()).is_err());
    }
}
