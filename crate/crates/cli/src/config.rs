//! Experiment configuration, read from a TOML file.

use std::path::{Path, PathBuf};

use clipsharp::clip::ClipSpec;
use clipsharp::optim::AlgorithmConfig;
use clipsharp::probe::ProbeSpec;
use clipsharp::problems::{InitSpec, ProblemSpec};
use clipsharp::trajectory::{ShadowSpec, TrainingRun, TrainingSpec, DEFAULT_STEPS_PER_EPOCH};
use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    /// Output directory; overridden by `CLIPSHARP_OUT` and `--out`.
    #[serde(default)]
    pub out: Option<PathBuf>,
    pub problem: ProblemSpec,
    #[serde(default)]
    pub init: InitSpec,
    #[serde(default)]
    pub train: Option<TrainSection>,
    #[serde(default)]
    pub probe: ProbeSpec,
    #[serde(default)]
    pub histogram: HistogramSection,
    #[serde(default)]
    pub lemma: LemmaSection,
    #[serde(default)]
    pub gauss_newton: GaussNewtonSection,
    #[serde(default)]
    pub compare: Option<CompareSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    #[serde(default)]
    pub label: Option<String>,
    pub algorithm: AlgorithmConfig,
    #[serde(default)]
    pub clip: ClipSpec,
    pub lr: f64,
    pub steps: usize,
    #[serde(default)]
    pub shadows: Vec<ShadowSpec>,
    #[serde(default)]
    pub probe_steps: Vec<usize>,
    #[serde(default)]
    pub probe_epochs: Vec<usize>,
    #[serde(default = "default_steps_per_epoch")]
    pub steps_per_epoch: usize,
    /// Shadow used as the sharpness-ratio denominator; defaults to the
    /// shadow labelled `sgd` when there is one.
    #[serde(default)]
    pub baseline: Option<String>,
    #[serde(default)]
    pub gradient_noise: f64,
}

fn default_steps_per_epoch() -> usize {
    DEFAULT_STEPS_PER_EPOCH
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistogramSection {
    #[serde(default = "default_lo_exp")]
    pub lo_exp: i32,
    #[serde(default = "default_hi_exp")]
    pub hi_exp: i32,
}

fn default_lo_exp() -> i32 {
    -12
}

fn default_hi_exp() -> i32 {
    2
}

impl Default for HistogramSection {
    fn default() -> Self {
        Self { lo_exp: default_lo_exp(), hi_exp: default_hi_exp() }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LemmaSection {
    #[serde(default = "default_lemma_steps")]
    pub steps: usize,
    #[serde(default = "default_clip_fraction")]
    pub clip_fraction: f64,
}

fn default_lemma_steps() -> usize {
    100
}

fn default_clip_fraction() -> f64 {
    0.1
}

impl Default for LemmaSection {
    fn default() -> Self {
        Self { steps: default_lemma_steps(), clip_fraction: default_clip_fraction() }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussNewtonSection {
    /// First `batch_size` samples; all samples when absent.
    #[serde(default)]
    pub batch_size: Option<usize>,
    #[serde(default = "default_multiplier")]
    pub multiplier: f64,
    /// Training steps after which to analyze; 0 is the initial point.
    #[serde(default = "default_checkpoints")]
    pub checkpoints: Vec<usize>,
}

fn default_multiplier() -> f64 {
    clipsharp::gauss_newton::DEFAULT_REMOVAL_MULTIPLIER
}

fn default_checkpoints() -> Vec<usize> {
    vec![0]
}

impl Default for GaussNewtonSection {
    fn default() -> Self {
        Self { batch_size: None, multiplier: default_multiplier(), checkpoints: default_checkpoints() }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSection {
    pub steps: usize,
    pub runs: Vec<CompareRun>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareRun {
    #[serde(default)]
    pub label: Option<String>,
    pub algorithm: AlgorithmConfig,
    #[serde(default)]
    pub clip: ClipSpec,
    pub lr: f64,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Parses TOML, reporting the path of the offending field on error.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let de = toml::Deserializer::new(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            let msg = inner.message().trim().to_string();
            if path.is_empty() || path == "." {
                CliError::Config(msg)
            } else {
                CliError::Config(format!("{path}: {msg}"))
            }
        })
    }

    pub fn train_section(&self) -> Result<&TrainSection, CliError> {
        self.train.as_ref().ok_or_else(|| CliError::Config("missing [train] section".into()))
    }

    /// The training run described by `[train]`.
    pub fn training_run(&self) -> Result<TrainingRun, CliError> {
        let t = self.train_section()?;
        let baseline = t.baseline.clone().or_else(|| {
            t.shadows.iter().any(|s| s.label == "sgd").then(|| "sgd".to_string())
        });
        let run = TrainingRun {
            label: t.label.clone(),
            problem: self.problem.clone(),
            init: self.init.clone(),
            training: TrainingSpec { algorithm: t.algorithm, clip: t.clip, lr: t.lr },
            shadows: t.shadows.clone(),
            steps: t.steps,
            probe_steps: t.probe_steps.clone(),
            probe_epochs: t.probe_epochs.clone(),
            steps_per_epoch: t.steps_per_epoch,
            baseline,
            seed: self.seed,
            gradient_noise: t.gradient_noise,
            probe: self.probe.clone(),
        };
        run.validate().map_err(|e| CliError::Config(format!("train: {e}")))?;
        Ok(run)
    }

    /// One training run per `[[compare.runs]]` entry.
    pub fn compare_runs(&self) -> Result<Vec<TrainingRun>, CliError> {
        let c = self.compare.as_ref().ok_or_else(|| CliError::Config("missing [compare] section".into()))?;
        if c.runs.is_empty() {
            return Err(CliError::Config("compare.runs: at least one run is required".into()));
        }
        c.runs
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let mut run = TrainingRun::new(
                    self.problem.clone(),
                    TrainingSpec { algorithm: r.algorithm, clip: r.clip, lr: r.lr },
                    c.steps,
                );
                run.label = r.label.clone();
                run.init = self.init.clone();
                run.seed = self.seed;
                run.validate().map_err(|e| CliError::Config(format!("compare.runs[{i}]: {e}")))?;
                Ok(run)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_takes_defaults() {
        let cfg = ExperimentConfig::parse("[problem]\nkind = \"intro_quadratic\"\ndim = 2\n").unwrap();
        assert_eq!(cfg.seed, 0);
        assert_eq!(cfg.lemma.clip_fraction, 0.1);
        assert_eq!(cfg.gauss_newton.checkpoints, vec![0]);
        assert!(cfg.train.is_none());
    }

    #[test]
    fn unknown_key_reports_path() {
        let err = ExperimentConfig::parse(
            "[problem]\nkind = \"intro_quadratic\"\ndim = 2\n[train]\nalgorithm = { kind = \"sgd\" }\nlr = 0.1\nsteps = 3\nstpes = 4\n",
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("train"), "{msg}");
        assert!(msg.contains("stpes"), "{msg}");
    }

    #[test]
    fn wrong_type_reports_path() {
        let err = ExperimentConfig::parse("[problem]\nkind = \"intro_quadratic\"\ndim = \"two\"\n").unwrap_err();
        assert!(err.to_string().contains("problem"), "{err}");
    }

    #[test]
    fn sgd_shadow_is_default_baseline() {
        let cfg = ExperimentConfig::parse(
            r#"
[problem]
kind = "intro_quadratic"
dim = 2
[train]
algorithm = { kind = "sgd" }
lr = 0.001
steps = 2
probe_steps = [1]
shadows = [{ label = "sgd", algorithm = { kind = "sgd" } }]
"#,
        )
        .unwrap();
        assert_eq!(cfg.training_run().unwrap().baseline.as_deref(), Some("sgd"));
    }
}
