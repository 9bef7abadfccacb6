//! Optimizer zoo with optional coordinate-wise clipping.
//!
//! [`Optimizer`] couples an [`AlgorithmConfig`] with its state, a clip spec and
//! the parameter grouping. [`Optimizer::candidate_update`] advances the state
//! and returns the unscaled update direction; [`Optimizer::step`] also applies
//! it to the parameters.

mod adafactor;
mod checkpoint;
mod layout;
mod state;

use serde::{Deserialize, Serialize};

pub use adafactor::{
    adafactor_step, relative_step_size, rms, second_moment_decay, step_sizes, Accumulator,
    AdafactorState, CLIP_THRESHOLD as ADAFACTOR_CLIP_THRESHOLD, EPS1 as ADAFACTOR_EPS1,
    EPS2 as ADAFACTOR_EPS2,
};
pub use checkpoint::{StateDump, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use layout::{GroupLayout, GroupLayoutBuilder, GroupShape, ParamGroup};
pub use state::{normalized_sgd_update, AdamState, LionState, SgdMomentumState};

use crate::clip::{ClipSpec, ClipTarget};
use crate::diffcore::ParamVector;
use crate::error::{check_dim, Error, Result};

pub const DEFAULT_SGD_BETA: f64 = 0.9;
pub const DEFAULT_ADAM_BETA1: f64 = 0.9;
pub const DEFAULT_ADAM_BETA2: f64 = 0.999;
pub const DEFAULT_ADAM_EPS: f64 = 1e-8;
pub const DEFAULT_LION_BETA1: f64 = 0.9;
pub const DEFAULT_LION_BETA2: f64 = 0.99;

fn sgd_beta() -> f64 {
    DEFAULT_SGD_BETA
}
fn adam_beta1() -> f64 {
    DEFAULT_ADAM_BETA1
}
fn adam_beta2() -> f64 {
    DEFAULT_ADAM_BETA2
}
fn adam_eps() -> f64 {
    DEFAULT_ADAM_EPS
}
fn lion_beta1() -> f64 {
    DEFAULT_LION_BETA1
}
fn lion_beta2() -> f64 {
    DEFAULT_LION_BETA2
}
fn yes() -> bool {
    true
}

/// Algorithm id plus hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AlgorithmConfig {
    Sgd {
        #[serde(default = "sgd_beta")]
        beta: f64,
    },
    NormalizedSgd {
        #[serde(default = "sgd_beta")]
        beta: f64,
    },
    SignSgd {
        #[serde(default = "sgd_beta")]
        beta: f64,
    },
    Adam {
        #[serde(default = "adam_beta1")]
        beta1: f64,
        #[serde(default = "adam_beta2")]
        beta2: f64,
        #[serde(default = "adam_eps")]
        eps: f64,
    },
    Adafactor {
        /// Use `α_t = max{ε₂, RMS(x)}·ρ_t`; when false the caller's learning
        /// rate replaces `α_t`.
        #[serde(default = "yes")]
        relative_step: bool,
    },
    Lion {
        #[serde(default = "lion_beta1")]
        beta1: f64,
        #[serde(default = "lion_beta2")]
        beta2: f64,
    },
}

impl AlgorithmConfig {
    pub fn sgd() -> Self {
        AlgorithmConfig::Sgd { beta: DEFAULT_SGD_BETA }
    }
    pub fn normalized_sgd() -> Self {
        AlgorithmConfig::NormalizedSgd { beta: DEFAULT_SGD_BETA }
    }
    pub fn sign_sgd() -> Self {
        AlgorithmConfig::SignSgd { beta: DEFAULT_SGD_BETA }
    }
    pub fn adam() -> Self {
        AlgorithmConfig::Adam { beta1: DEFAULT_ADAM_BETA1, beta2: DEFAULT_ADAM_BETA2, eps: DEFAULT_ADAM_EPS }
    }
    pub fn adafactor() -> Self {
        AlgorithmConfig::Adafactor { relative_step: true }
    }
    pub fn lion() -> Self {
        AlgorithmConfig::Lion { beta1: DEFAULT_LION_BETA1, beta2: DEFAULT_LION_BETA2 }
    }

    pub fn name(&self) -> &'static str {
        match self {
            AlgorithmConfig::Sgd { .. } => "sgd",
            AlgorithmConfig::NormalizedSgd { .. } => "normalized_sgd",
            AlgorithmConfig::SignSgd { .. } => "sign_sgd",
            AlgorithmConfig::Adam { .. } => "adam",
            AlgorithmConfig::Adafactor { .. } => "adafactor",
            AlgorithmConfig::Lion { .. } => "lion",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, b: f64| {
            if (0.0..1.0).contains(&b) {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} must lie in [0, 1), got {b}")))
            }
        };
        match *self {
            AlgorithmConfig::Sgd { beta }
            | AlgorithmConfig::NormalizedSgd { beta }
            | AlgorithmConfig::SignSgd { beta } => unit("beta", beta),
            AlgorithmConfig::Adam { beta1, beta2, eps } => {
                unit("beta1", beta1)?;
                unit("beta2", beta2)?;
                if eps >= 0.0 && eps.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter(format!("adam eps must be non-negative, got {eps}")))
                }
            }
            AlgorithmConfig::Lion { beta1, beta2 } => {
                unit("beta1", beta1)?;
                unit("beta2", beta2)
            }
            AlgorithmConfig::Adafactor { .. } => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum OptimizerState {
    Sgd(SgdMomentumState),
    NormalizedSgd(SgdMomentumState),
    SignSgd(SgdMomentumState),
    Adam(AdamState),
    Adafactor(AdafactorState),
    Lion(LionState),
}

impl OptimizerState {
    pub fn new(config: &AlgorithmConfig, layout: &GroupLayout) -> Self {
        let d = layout.total_len();
        match *config {
            AlgorithmConfig::Sgd { beta } => OptimizerState::Sgd(SgdMomentumState::new(d, beta)),
            AlgorithmConfig::NormalizedSgd { beta } => {
                OptimizerState::NormalizedSgd(SgdMomentumState::new(d, beta))
            }
            AlgorithmConfig::SignSgd { beta } => OptimizerState::SignSgd(SgdMomentumState::new(d, beta)),
            AlgorithmConfig::Adam { beta1, beta2, eps } => {
                OptimizerState::Adam(AdamState::new(d, beta1, beta2, eps))
            }
            AlgorithmConfig::Adafactor { .. } => OptimizerState::Adafactor(AdafactorState::new(layout)),
            AlgorithmConfig::Lion { beta1, beta2 } => OptimizerState::Lion(LionState::new(d, beta1, beta2)),
        }
    }

    pub fn t(&self) -> u64 {
        match self {
            OptimizerState::Sgd(s) | OptimizerState::NormalizedSgd(s) | OptimizerState::SignSgd(s) => s.t,
            OptimizerState::Adam(s) => s.t,
            OptimizerState::Adafactor(s) => s.t,
            OptimizerState::Lion(s) => s.t,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer {
    config: AlgorithmConfig,
    clip: ClipSpec,
    layout: GroupLayout,
    state: OptimizerState,
}

impl Optimizer {
    pub fn new(config: AlgorithmConfig, clip: ClipSpec, layout: GroupLayout) -> Result<Self> {
        config.validate()?;
        if clip.enabled {
            clip.validate()?;
        }
        layout.check(layout.total_len())?;
        if matches!(config, AlgorithmConfig::Lion { .. }) && clip.applies_to(ClipTarget::Update) {
            log::warn!("lion with update clipping: percentile clipping of a sign vector is a no-op");
        }
        let state = OptimizerState::new(&config, &layout);
        Ok(Self { config, clip, layout, state })
    }

    pub fn config(&self) -> &AlgorithmConfig {
        &self.config
    }

    pub fn clip(&self) -> &ClipSpec {
        &self.clip
    }

    pub fn layout(&self) -> &GroupLayout {
        &self.layout
    }

    pub fn state(&self) -> &OptimizerState {
        &self.state
    }

    pub fn dim(&self) -> usize {
        self.layout.total_len()
    }

    /// Advances the state with gradient `g` and returns the unscaled update.
    pub fn candidate_update(&mut self, g: &[f64]) -> Result<ParamVector> {
        check_dim(self.dim(), g.len())?;
        match &mut self.state {
            OptimizerState::Sgd(s) => s.sgd_update(g, &self.clip),
            OptimizerState::NormalizedSgd(s) => normalized_sgd_update(s, g, &self.layout, &self.clip),
            OptimizerState::SignSgd(s) => s.sign_update(g, &self.clip),
            OptimizerState::Adam(s) => s.update(g, &self.clip),
            OptimizerState::Adafactor(s) => s.update(g, &self.layout, &self.clip),
            OptimizerState::Lion(s) => s.update(g, &self.clip),
        }
    }

    /// Advances the state and returns the new parameters.
    ///
    /// `lr` is the learning rate `η`; Adafactor with relative steps ignores it
    /// and uses its own per-group `α_t`.
    pub fn step(&mut self, x: &ParamVector, g: &[f64], lr: f64) -> Result<ParamVector> {
        check_dim(x.len(), g.len())?;
        if let (AlgorithmConfig::Adafactor { relative_step }, OptimizerState::Adafactor(s)) =
            (self.config, &mut self.state)
        {
            let lr_override = (!relative_step).then_some(lr);
            let step = adafactor_step(s, x, g, &self.layout, &self.clip, lr_override)?;
            return apply_update(x, &step, 1.0);
        }
        let u = self.candidate_update(g)?;
        apply_update(x, &u, lr)
    }

    /// Replaces the state, e.g. when restoring a checkpoint.
    pub fn set_state(&mut self, state: OptimizerState) -> Result<()> {
        let expected = OptimizerState::new(&self.config, &self.layout);
        if std::mem::discriminant(&expected) != std::mem::discriminant(&state) {
            return Err(Error::Checkpoint("state does not match the configured algorithm".into()));
        }
        self.state = state;
        Ok(())
    }
}

/// `x − η·u`.
pub fn apply_update(x: &ParamVector, u: &[f64], eta: f64) -> Result<ParamVector> {
    check_dim(x.len(), u.len())?;
    Ok(ParamVector::from_raw(x.iter().zip(u).map(|(xi, ui)| xi - eta * ui).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opt(config: AlgorithmConfig, clip: ClipSpec, d: usize) -> Optimizer {
        Optimizer::new(config, clip, GroupLayout::flat(d)).unwrap()
    }

    #[test]
    fn apply_update_examples() {
        let x = ParamVector::new(vec![1.0, 1.0]).unwrap();
        assert_eq!(apply_update(&x, &[0.0, 0.0], 0.3).unwrap(), x);
        let y = apply_update(&x, &[200.0, 2.0], 0.005).unwrap();
        assert_eq!(y.as_slice(), &[0.0, 0.99]);
        assert_eq!(apply_update(&x, &x, 1.0).unwrap().as_slice(), &[0.0, 0.0]);
        assert_eq!(x.as_slice(), &[1.0, 1.0]);
        assert!(apply_update(&x, &[1.0], 1.0).is_err());
    }

    #[test]
    fn candidate_update_examples() {
        let g = [4.0, -3.0];
        let mut sgd = opt(AlgorithmConfig::Sgd { beta: 0.0 }, ClipSpec::disabled(), 2);
        assert_eq!(sgd.candidate_update(&g).unwrap().as_slice(), &g);

        let mut sign = opt(AlgorithmConfig::SignSgd { beta: 0.0 }, ClipSpec::disabled(), 2);
        assert_eq!(sign.candidate_update(&g).unwrap().as_slice(), &[1.0, -1.0]);

        let bare_adam = AlgorithmConfig::Adam { beta1: 0.0, beta2: 0.0, eps: 0.0 };
        let mut adam = opt(bare_adam, ClipSpec::disabled(), 2);
        assert_eq!(adam.candidate_update(&g).unwrap().as_slice(), &[1.0, -1.0]);

        let exact = ClipSpec::gradient(0.5).unwrap().with_policy(crate::clip::ThresholdPolicy::ExactCount);
        let mut clipped = opt(bare_adam, exact, 2);
        assert_eq!(clipped.candidate_update(&g).unwrap().as_slice(), &[0.75, -1.0]);
    }

    #[test]
    fn update_target_clips_after_algorithm() {
        let mut sgd = opt(AlgorithmConfig::Sgd { beta: 0.0 }, ClipSpec::update(0.5).unwrap(), 4);
        let u = sgd.candidate_update(&[4.0, -3.0, 2.0, 1.0]).unwrap();
        assert_eq!(u.as_slice(), &[3.0, -3.0, 2.0, 1.0]);
        // Momentum itself is unclipped.
        let OptimizerState::Sgd(s) = sgd.state() else { unreachable!() };
        assert_eq!(s.m.as_slice(), &[4.0, -3.0, 2.0, 1.0]);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let mut o = opt(AlgorithmConfig::adam(), ClipSpec::disabled(), 3);
        assert!(matches!(o.candidate_update(&[1.0, 2.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn invalid_hyperparameters_rejected() {
        let layout = GroupLayout::flat(2);
        assert!(Optimizer::new(AlgorithmConfig::Sgd { beta: 1.0 }, ClipSpec::disabled(), layout.clone()).is_err());
        assert!(Optimizer::new(
            AlgorithmConfig::Adam { beta1: 0.9, beta2: 0.999, eps: -1.0 },
            ClipSpec::disabled(),
            layout.clone()
        )
        .is_err());
        let bad_clip = ClipSpec { fraction: 0.0, ..ClipSpec::gradient(0.5).unwrap() };
        assert!(Optimizer::new(AlgorithmConfig::sgd(), bad_clip, layout).is_err());
    }

    #[test]
    fn config_parses_with_defaults() {
        let c: AlgorithmConfig = serde_json::from_str(r#"{"kind":"adam"}"#).unwrap();
        assert_eq!(c, AlgorithmConfig::adam());
        let c: AlgorithmConfig = serde_json::from_str(r#"{"kind":"sgd","beta":0.0}"#).unwrap();
        assert_eq!(c, AlgorithmConfig::Sgd { beta: 0.0 });
        assert!(serde_json::from_str::<AlgorithmConfig>(r#"{"kind":"sgd","gamma":1}"#).is_err());
        assert!(serde_json::from_str::<AlgorithmConfig>(r#"{"kind":"rmsprop"}"#).is_err());
    }

    #[test]
    fn adafactor_step_without_relative_step_uses_lr() {
        let mut o = opt(AlgorithmConfig::Adafactor { relative_step: false }, ClipSpec::disabled(), 2);
        let x = ParamVector::new(vec![1.0, 1.0]).unwrap();
        let y = o.step(&x, &[3.0, -4.0], 0.5).unwrap();
        assert!((y[0] - 0.5).abs() < 1e-15 && (y[1] - 1.5).abs() < 1e-15);
    }
}
