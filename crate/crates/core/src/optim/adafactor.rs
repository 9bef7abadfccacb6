//! Adafactor with factored second moments for matrix groups and full second
//! moments for vector groups. Gradient clipping touches only the numerator;
//! the accumulators always see the raw `G² + ε₁`.

use crate::clip::{ClipSpec, ClipTarget};
use crate::diffcore::{norm, ParamVector};
use crate::error::{check_dim, Error, Result};

use super::layout::{GroupLayout, GroupShape};

pub const EPS1: f64 = 1e-30;
pub const EPS2: f64 = 1e-3;
pub const CLIP_THRESHOLD: f64 = 1.0;
pub const DECAY_EXPONENT: f64 = 0.8;
pub const MAX_RELATIVE_STEP: f64 = 1e-2;

/// `ρ_t = min{10⁻², 1/√t}`.
pub fn relative_step_size(t: u64) -> Result<f64> {
    if t == 0 {
        return Err(Error::contract("adafactor step counter starts at 1"));
    }
    Ok(MAX_RELATIVE_STEP.min(1.0 / (t as f64).sqrt()))
}

/// `β̂_{2t} = 1 − t^{−0.8}`.
pub fn second_moment_decay(t: u64) -> Result<f64> {
    if t == 0 {
        return Err(Error::contract("adafactor step counter starts at 1"));
    }
    Ok(1.0 - (t as f64).powf(-DECAY_EXPONENT))
}

/// `‖x‖/√n`.
pub fn rms(x: &[f64]) -> f64 {
    if x.is_empty() {
        0.0
    } else {
        norm(x) / (x.len() as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Accumulator {
    /// Row sums `R` (length rows) and column sums `C` (length cols).
    Factored { rows: usize, cols: usize, r: Vec<f64>, c: Vec<f64> },
    Full { v: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdafactorState {
    pub accumulators: Vec<Accumulator>,
    pub t: u64,
}

impl AdafactorState {
    pub fn new(layout: &GroupLayout) -> Self {
        let accumulators = layout
            .groups()
            .iter()
            .map(|g| match g.shape {
                GroupShape::Matrix { rows, cols } => {
                    Accumulator::Factored { rows, cols, r: vec![0.0; rows], c: vec![0.0; cols] }
                }
                GroupShape::Vector { len } => Accumulator::Full { v: vec![0.0; len] },
            })
            .collect();
        Self { accumulators, t: 0 }
    }

    /// Advances the accumulators and returns `Û_t` for every group.
    pub fn update(&mut self, g: &[f64], layout: &GroupLayout, clip: &ClipSpec) -> Result<ParamVector> {
        layout.check(g.len())?;
        check_dim(layout.groups().len(), self.accumulators.len())?;
        let t = self.t + 1;
        let decay = second_moment_decay(t)?;
        let g_hat = clip.apply(ClipTarget::Gradient, g)?;
        let mut out = vec![0.0; g.len()];

        for (group, acc) in layout.groups().iter().zip(self.accumulators.iter_mut()) {
            let range = group.range();
            let raw = &g[range.clone()];
            let numer = &g_hat[range.clone()];
            let u = &mut out[range];
            match acc {
                Accumulator::Factored { rows, cols, r, c } => {
                    let (rows, cols) = (*rows, *cols);
                    check_dim(rows * cols, raw.len())?;
                    for i in 0..rows {
                        let row_sum: f64 = raw[i * cols..(i + 1) * cols].iter().map(|x| x * x + EPS1).sum();
                        r[i] = decay * r[i] + (1.0 - decay) * row_sum;
                    }
                    for j in 0..cols {
                        let col_sum: f64 = (0..rows).map(|i| raw[i * cols + j].powi(2) + EPS1).sum();
                        c[j] = decay * c[j] + (1.0 - decay) * col_sum;
                    }
                    let r_total: f64 = r.iter().sum();
                    for i in 0..rows {
                        for j in 0..cols {
                            let v_hat = r[i] * c[j] / r_total;
                            u[i * cols + j] = numer[i * cols + j] / v_hat.sqrt();
                        }
                    }
                }
                Accumulator::Full { v } => {
                    check_dim(v.len(), raw.len())?;
                    for (k, vk) in v.iter_mut().enumerate() {
                        *vk = decay * *vk + (1.0 - decay) * (raw[k] * raw[k] + EPS1);
                        u[k] = numer[k] / vk.sqrt();
                    }
                }
            }
            let scale = (rms(u) / CLIP_THRESHOLD).max(1.0);
            u.iter_mut().for_each(|x| *x /= scale);
        }
        self.t = t;
        Ok(ParamVector::from_raw(clip.apply(ClipTarget::Update, &out)?))
    }
}

/// Per-group step sizes: `α_t = max{ε₂, RMS(x_{t−1})}·ρ_t`, or the override.
pub fn step_sizes(x: &[f64], layout: &GroupLayout, t: u64, lr_override: Option<f64>) -> Result<Vec<f64>> {
    if let Some(lr) = lr_override {
        return Ok(vec![lr; layout.groups().len()]);
    }
    let rho = relative_step_size(t)?;
    Ok(layout
        .groups()
        .iter()
        .map(|g| EPS2.max(rms(&x[g.range()])) * rho)
        .collect())
}

/// One Adafactor step; returns the displacement `α_t·Û_t` subtracted from `x`.
pub fn adafactor_step(
    state: &mut AdafactorState,
    x: &[f64],
    g: &[f64],
    layout: &GroupLayout,
    clip: &ClipSpec,
    lr_override: Option<f64>,
) -> Result<ParamVector> {
    check_dim(x.len(), g.len())?;
    let u = state.update(g, layout, clip)?;
    let alphas = step_sizes(x, layout, state.t, lr_override)?;
    let mut step = u.into_vec();
    for (group, alpha) in layout.groups().iter().zip(alphas) {
        step[group.range()].iter_mut().for_each(|s| *s *= alpha);
    }
    Ok(ParamVector::from_raw(step))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vector_group_first_step() {
        let layout = GroupLayout::flat(2);
        let mut s = AdafactorState::new(&layout);
        let u = s.update(&[3.0, -4.0], &layout, &ClipSpec::disabled()).unwrap();
        assert!((u[0] - 1.0).abs() < 1e-15 && (u[1] + 1.0).abs() < 1e-15);
        match &s.accumulators[0] {
            Accumulator::Full { v } => {
                assert!((v[0] - 9.0).abs() < 1e-15 && (v[1] - 16.0).abs() < 1e-15)
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn single_row_matrix_matches_full() {
        let g = [0.5, -2.0, 3.0, 0.25];
        let row = GroupLayout::builder().matrix("w", 1, 4).build();
        let flat = GroupLayout::flat(4);
        let mut a = AdafactorState::new(&row);
        let mut b = AdafactorState::new(&flat);
        for _ in 0..3 {
            let ua = a.update(&g, &row, &ClipSpec::disabled()).unwrap();
            let ub = b.update(&g, &flat, &ClipSpec::disabled()).unwrap();
            for (x, y) in ua.iter().zip(ub.iter()) {
                assert!((x - y).abs() <= 1e-12 * y.abs().max(1.0), "{x} vs {y}");
            }
        }
    }

    #[test]
    fn factored_second_moment_at_first_step() {
        let layout = GroupLayout::builder().matrix("w", 2, 2).build();
        let mut s = AdafactorState::new(&layout);
        let g = [1.0, 2.0, 3.0, 4.0];
        s.update(&g, &layout, &ClipSpec::disabled()).unwrap();
        let Accumulator::Factored { r, c, .. } = &s.accumulators[0] else { unreachable!() };
        assert_eq!(r, &vec![5.0 + 2.0 * EPS1, 25.0 + 2.0 * EPS1]);
        assert_eq!(c, &vec![10.0 + 2.0 * EPS1, 20.0 + 2.0 * EPS1]);
    }

    #[test]
    fn rms_clipping_caps_update() {
        // Imbalanced first step: U = g/|g| has RMS 1, so scaling is inactive;
        // with clipping the numerator shrinks but never grows RMS above 1.
        let layout = GroupLayout::flat(4);
        let mut s = AdafactorState::new(&layout);
        let u = s.update(&[100.0, 1.0, 1.0, 1.0], &layout, &ClipSpec::gradient(0.5).unwrap()).unwrap();
        assert!(rms(&u) <= 1.0 + 1e-12);
        assert!((u[0] - 0.01).abs() < 1e-12);
    }

    #[test]
    fn relative_step_schedule() {
        assert_eq!(relative_step_size(10_000).unwrap(), 0.01);
        assert_eq!(relative_step_size(1).unwrap(), 0.01);
        assert!((relative_step_size(40_000).unwrap() - 0.005).abs() < 1e-15);
        assert!(relative_step_size(0).is_err());
        assert_eq!(second_moment_decay(1).unwrap(), 0.0);
        assert!(second_moment_decay(0).is_err());
    }

    #[test]
    fn step_uses_relative_size_or_override() {
        let layout = GroupLayout::flat(2);
        let mut s = AdafactorState::new(&layout);
        let x = [3.0, 4.0];
        let step = adafactor_step(&mut s, &x, &[3.0, -4.0], &layout, &ClipSpec::disabled(), None).unwrap();
        let alpha = rms(&x) * 0.01;
        assert!((step[0] - alpha).abs() < 1e-15);
        let mut s = AdafactorState::new(&layout);
        let step =
            adafactor_step(&mut s, &x, &[3.0, -4.0], &layout, &ClipSpec::disabled(), Some(0.5)).unwrap();
        assert!((step[1] + 0.5).abs() < 1e-15);
    }

    #[test]
    fn tiny_parameters_use_eps2_floor() {
        let layout = GroupLayout::flat(2);
        let alphas = step_sizes(&[0.0, 0.0], &layout, 4, None).unwrap();
        assert_eq!(alphas, vec![EPS2 * 0.01]);
    }
}
