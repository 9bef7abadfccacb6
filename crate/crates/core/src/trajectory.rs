//! Training with shadow optimizer states and scheduled probes.
//!
//! Every step computes `g` at the current point, advances each shadow state
//! with `g`, probes the shadows' candidate updates if the step is scheduled,
//! and only then advances the live optimizer and moves `x`. Shadows never
//! touch `x`, so a run with probes follows exactly the same trajectory as one
//! without.

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clip::ClipSpec;
use crate::diffcore::{gradient, Objective, ParamVector};
use crate::error::{Error, Result};
use crate::optim::{AlgorithmConfig, Optimizer};
use crate::probe::{probe_directions, ProbeReport, ProbeSpec};
use crate::problems::{InitSpec, Problem, ProblemSpec};

pub const DEFAULT_STEPS_PER_EPOCH: usize = 10;

fn default_steps_per_epoch() -> usize {
    DEFAULT_STEPS_PER_EPOCH
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSpec {
    pub algorithm: AlgorithmConfig,
    #[serde(default)]
    pub clip: ClipSpec,
    pub lr: f64,
}

/// An algorithm fed the training gradients for probing only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShadowSpec {
    pub label: String,
    pub algorithm: AlgorithmConfig,
    #[serde(default)]
    pub clip: ClipSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingRun {
    #[serde(default)]
    pub label: Option<String>,
    pub problem: ProblemSpec,
    #[serde(default)]
    pub init: InitSpec,
    pub training: TrainingSpec,
    #[serde(default)]
    pub shadows: Vec<ShadowSpec>,
    pub steps: usize,
    /// Steps (0-based) at which to probe, before that step's update.
    #[serde(default)]
    pub probe_steps: Vec<usize>,
    /// Epochs (1-based) at which to probe, before the epoch's first step.
    #[serde(default)]
    pub probe_epochs: Vec<usize>,
    #[serde(default = "default_steps_per_epoch")]
    pub steps_per_epoch: usize,
    /// Shadow whose sharpness is the denominator of the probe ratios.
    #[serde(default)]
    pub baseline: Option<String>,
    #[serde(default)]
    pub seed: u64,
    /// Standard deviation of additive Gaussian gradient noise.
    #[serde(default)]
    pub gradient_noise: f64,
    #[serde(default)]
    pub probe: ProbeSpec,
}

impl TrainingRun {
    pub fn new(problem: ProblemSpec, training: TrainingSpec, steps: usize) -> Self {
        Self {
            label: None,
            problem,
            init: InitSpec::Default,
            training,
            shadows: Vec::new(),
            steps,
            probe_steps: Vec::new(),
            probe_epochs: Vec::new(),
            steps_per_epoch: DEFAULT_STEPS_PER_EPOCH,
            baseline: None,
            seed: 0,
            gradient_noise: 0.0,
            probe: ProbeSpec::default(),
        }
    }

    pub fn display_label(&self) -> String {
        self.label.clone().unwrap_or_else(|| {
            let name = self.training.algorithm.name();
            if self.training.clip.enabled {
                format!("{name}_clip{}", self.training.clip.fraction)
            } else {
                name.to_string()
            }
        })
    }

    /// Sorted union of `probe_steps` and the first steps of `probe_epochs`.
    pub fn schedule(&self) -> Result<BTreeSet<usize>> {
        if self.steps_per_epoch == 0 {
            return Err(Error::InvalidParameter("steps_per_epoch must be positive".into()));
        }
        let mut steps: BTreeSet<usize> = self.probe_steps.iter().copied().collect();
        for &e in &self.probe_epochs {
            if e == 0 {
                return Err(Error::InvalidParameter("probe epochs are 1-based".into()));
            }
            steps.insert((e - 1) * self.steps_per_epoch);
        }
        if let Some(&last) = steps.iter().next_back() {
            if last >= self.steps {
                return Err(Error::InvalidParameter(format!(
                    "probe step {last} is not among the {} executed steps",
                    self.steps
                )));
            }
        }
        Ok(steps)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.training.lr > 0.0 && self.training.lr.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "learning rate must be positive, got {}",
                self.training.lr
            )));
        }
        if !(self.gradient_noise >= 0.0 && self.gradient_noise.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "gradient noise must be nonnegative, got {}",
                self.gradient_noise
            )));
        }
        let mut labels = BTreeSet::new();
        for s in &self.shadows {
            if !labels.insert(s.label.as_str()) {
                return Err(Error::InvalidParameter(format!("duplicate shadow label `{}`", s.label)));
            }
        }
        if let Some(b) = &self.baseline {
            if !labels.contains(b.as_str()) {
                return Err(Error::InvalidParameter(format!("baseline `{b}` is not a shadow label")));
            }
        }
        self.probe.validate()?;
        self.schedule()?;
        Ok(())
    }
}

/// Shadow optimizers keyed by label, in declaration order.
#[derive(Debug, Clone, PartialEq)]
pub struct ShadowBank {
    entries: Vec<(String, Optimizer)>,
}

impl ShadowBank {
    pub fn get(&self, label: &str) -> Option<&Optimizer> {
        self.entries.iter().find(|(l, _)| l == label).map(|(_, o)| o)
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(l, _)| l.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Advances every shadow with `g` and returns their candidate updates.
    fn advance(&mut self, g: &[f64]) -> Result<Vec<(String, ParamVector)>> {
        self.entries
            .iter_mut()
            .map(|(label, opt)| Ok((label.clone(), opt.candidate_update(g)?)))
            .collect()
    }
}

/// Probe output at one scheduled step.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSnapshot {
    pub step: usize,
    pub x: ParamVector,
    pub report: ProbeReport,
    /// Each shadow's candidate update at this step.
    pub directions: Vec<(String, ParamVector)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    /// `f(x_0), …, f(x_T)`.
    pub losses: Vec<f64>,
    pub probes: Vec<ProbeSnapshot>,
    pub final_x: ParamVector,
}

/// Step-by-step driver behind [`run`].
pub struct Trainer {
    problem: Problem,
    x: ParamVector,
    live: Optimizer,
    shadows: ShadowBank,
    lr: f64,
    noise: Option<(Normal<f64>, ChaCha8Rng)>,
    schedule: BTreeSet<usize>,
    baseline: Option<String>,
    probe: ProbeSpec,
    step: usize,
}

impl Trainer {
    pub fn new(run: &TrainingRun) -> Result<Self> {
        run.validate()?;
        let problem = run.problem.build(run.seed)?;
        let x = problem.initial_point(&run.init)?;
        let layout = problem.layout.clone();
        let live = Optimizer::new(run.training.algorithm, run.training.clip, layout.clone())?;
        let entries = run
            .shadows
            .iter()
            .map(|s| Ok((s.label.clone(), Optimizer::new(s.algorithm, s.clip, layout.clone())?)))
            .collect::<Result<_>>()?;
        let noise = if run.gradient_noise > 0.0 {
            let normal = Normal::new(0.0, run.gradient_noise)
                .map_err(|e| Error::InvalidParameter(e.to_string()))?;
            // Offset keeps the noise stream distinct from problem construction.
            Some((normal, ChaCha8Rng::seed_from_u64(run.seed ^ 0x9E37_79B9_7F4A_7C15)))
        } else {
            None
        };
        Ok(Self {
            problem,
            x,
            live,
            shadows: ShadowBank { entries },
            lr: run.training.lr,
            noise,
            schedule: run.schedule()?,
            baseline: run.baseline.clone(),
            probe: run.probe.clone(),
            step: 0,
        })
    }

    pub fn x(&self) -> &ParamVector {
        &self.x
    }

    pub fn live(&self) -> &Optimizer {
        &self.live
    }

    pub fn shadows(&self) -> &ShadowBank {
        &self.shadows
    }

    pub fn problem(&self) -> &Problem {
        &self.problem
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    /// Current loss, or [`Error::Diverged`] if it is not finite.
    pub fn loss(&self) -> Result<f64> {
        let f = self.problem.objective.eval(&self.x);
        if f.is_finite() {
            Ok(f)
        } else {
            Err(Error::Diverged { step: self.step, loss: f })
        }
    }

    /// Runs one step and returns the probe snapshot if the step was scheduled.
    pub fn step(&mut self) -> Result<Option<ProbeSnapshot>> {
        let step = self.step;
        let obj = &self.problem.objective;
        let mut g = gradient(obj, &self.x)
            .map_err(|_| Error::Diverged { step, loss: obj.eval(&self.x) })?
            .into_vec();
        if let Some((normal, rng)) = &mut self.noise {
            g.iter_mut().for_each(|gi| *gi += normal.sample(rng));
        }
        let directions = self.shadows.advance(&g)?;
        let snapshot = if self.schedule.contains(&step) {
            let report = probe_directions(obj, &self.x, &directions, self.baseline.as_deref(), &self.probe)?;
            Some(ProbeSnapshot { step, x: self.x.clone(), report, directions })
        } else {
            None
        };
        self.x = self.live.step(&self.x, &g, self.lr)?;
        self.step += 1;
        Ok(snapshot)
    }
}

pub fn run(spec: &TrainingRun) -> Result<RunOutput> {
    let mut trainer = Trainer::new(spec)?;
    let mut losses = Vec::with_capacity(spec.steps + 1);
    let mut probes = Vec::new();
    for _ in 0..spec.steps {
        losses.push(trainer.loss()?);
        if let Some(snapshot) = trainer.step()? {
            probes.push(snapshot);
        }
    }
    losses.push(trainer.loss()?);
    Ok(RunOutput { losses, probes, final_x: trainer.x })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub label: String,
    pub step: usize,
    pub loss: f64,
}

/// Loss curves of several runs on the same problem and seed, in run order.
pub fn compare_convergence(runs: &[TrainingRun]) -> Result<Vec<ConvergenceRow>> {
    if let Some(first) = runs.first() {
        for r in &runs[1..] {
            if r.problem != first.problem || r.seed != first.seed || r.init != first.init {
                return Err(Error::contract("compared runs must share problem, initial point and seed"));
            }
        }
    }
    let curves = runs
        .par_iter()
        .map(|r| Ok((r.display_label(), run(r)?.losses)))
        .collect::<Result<Vec<_>>>()?;
    Ok(curves
        .into_iter()
        .flat_map(|(label, losses)| {
            losses
                .into_iter()
                .enumerate()
                .map(move |(step, loss)| ConvergenceRow { label: label.clone(), step, loss })
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn intro_run(lr: f64, steps: usize) -> TrainingRun {
        let mut r = TrainingRun::new(
            ProblemSpec::IntroQuadratic { dim: 10 },
            TrainingSpec { algorithm: AlgorithmConfig::Sgd { beta: 0.0 }, clip: ClipSpec::disabled(), lr },
            steps,
        );
        r.init = InitSpec::Ones;
        r
    }

    #[test]
    fn sgd_at_stable_rate_decreases_monotonically() {
        let out = run(&intro_run(0.009, 100)).unwrap();
        assert_eq!(out.losses.len(), 101);
        assert!(out.losses.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn divergence_reports_step() {
        let err = run(&intro_run(0.5, 2000)).unwrap_err();
        assert!(matches!(err, Error::Diverged { .. }), "{err:?}");
    }

    #[test]
    fn shadow_matches_live_state() {
        let mut spec = intro_run(0.005, 50);
        spec.training.algorithm = AlgorithmConfig::adam();
        spec.shadows = vec![ShadowSpec {
            label: "adam".into(),
            algorithm: AlgorithmConfig::adam(),
            clip: ClipSpec::disabled(),
        }];
        let mut t = Trainer::new(&spec).unwrap();
        for _ in 0..50 {
            t.step().unwrap();
            assert_eq!(t.shadows().get("adam").unwrap().state(), t.live().state());
        }
    }

    #[test]
    fn schedule_combines_steps_and_epochs() {
        let mut spec = intro_run(0.005, 100);
        spec.probe_steps = vec![3];
        spec.probe_epochs = vec![2, 5];
        assert_eq!(spec.schedule().unwrap().into_iter().collect::<Vec<_>>(), vec![3, 10, 40]);
        spec.probe_epochs = vec![11];
        assert!(spec.schedule().is_err());
        spec.probe_epochs = vec![0];
        assert!(spec.schedule().is_err());
    }

    #[test]
    fn compare_rejects_mismatched_problems() {
        let a = intro_run(0.005, 5);
        let mut b = intro_run(0.005, 5);
        b.problem = ProblemSpec::IntroQuadratic { dim: 3 };
        assert!(matches!(compare_convergence(&[a.clone(), b]), Err(Error::ContractViolation(_))));
        let table = compare_convergence(std::slice::from_ref(&a)).unwrap();
        let own = run(&a).unwrap().losses;
        assert_eq!(table.iter().map(|r| r.loss).collect::<Vec<_>>(), own);
    }

    #[test]
    fn noise_is_seeded() {
        let mut spec = intro_run(0.005, 20);
        spec.gradient_noise = 0.1;
        let a = run(&spec).unwrap();
        let b = run(&spec).unwrap();
        assert!(a.final_x.bit_eq(&b.final_x));
        spec.seed = 1;
        assert!(!run(&spec).unwrap().final_x.bit_eq(&a.final_x));
    }
}
