//! Synthetic objectives: the ill-conditioned intro quadratic, general
//! quadratics, descent-lemma instances and a small MLP classifier.

mod mlp;
mod quadratic;
mod theorem;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use mlp::{make_mlp, perturbed_weights, MlpClassifier, MlpSpec, DEFAULT_SEPARATION};
pub use quadratic::{make_intro_quadratic, DenseQuadratic, DiagQuadratic};
pub use theorem::{make_theorem_instance, TheoremInstance, Uniformity};

#[cfg(test)]
pub(crate) use mlp::softmax;

use crate::diffcore::{Objective, ParamVector};
use crate::error::{Error, Result};
use crate::optim::GroupLayout;

/// Serializable problem definition.
///
/// Seeded problems take their seed from the surrounding experiment so that a
/// single seed reproduces a whole run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    IntroQuadratic {
        dim: usize,
    },
    DiagQuadratic {
        diag: Vec<f64>,
    },
    Theorem {
        dim: usize,
        eps: f64,
        l_bad: f64,
        ell_good: f64,
    },
    Mlp {
        input_dim: usize,
        hidden: usize,
        samples: usize,
        #[serde(default = "default_separation")]
        separation: f64,
    },
}

fn default_separation() -> f64 {
    DEFAULT_SEPARATION
}

/// Starting point for an experiment.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitSpec {
    /// Ones for quadratics, the seeded point for theorem instances and the
    /// seeded initial weights for the MLP.
    #[default]
    Default,
    Ones,
    Constant {
        value: f64,
    },
    Values {
        values: Vec<f64>,
    },
}

/// A built problem: objective, parameter grouping and starting point.
#[derive(Clone)]
pub struct Problem {
    pub objective: Arc<dyn Objective>,
    pub layout: GroupLayout,
    pub initial: ParamVector,
    pub kind: ProblemKind,
}

/// Concrete handle for problem-specific analyses.
#[derive(Debug, Clone)]
pub enum ProblemKind {
    Quadratic(DiagQuadratic),
    Theorem(TheoremInstance),
    Mlp(MlpClassifier),
}

impl std::fmt::Debug for Problem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Problem")
            .field("dim", &self.objective.dim())
            .field("layout", &self.layout)
            .field("kind", &self.kind)
            .finish()
    }
}

impl ProblemSpec {
    pub fn build(&self, seed: u64) -> Result<Problem> {
        let (objective, kind, default_init): (Arc<dyn Objective>, ProblemKind, Option<ParamVector>) =
            match self {
                ProblemSpec::IntroQuadratic { dim } => {
                    let q = make_intro_quadratic(*dim)?;
                    (Arc::new(q.clone()), ProblemKind::Quadratic(q), None)
                }
                ProblemSpec::DiagQuadratic { diag } => {
                    let q = DiagQuadratic::new(diag.clone())?;
                    (Arc::new(q.clone()), ProblemKind::Quadratic(q), None)
                }
                ProblemSpec::Theorem { dim, eps, l_bad, ell_good } => {
                    let inst = make_theorem_instance(*dim, *eps, *l_bad, *ell_good, seed)?;
                    let x0 = inst.initial_point();
                    (Arc::new(inst.objective().clone()), ProblemKind::Theorem(inst), Some(x0))
                }
                ProblemSpec::Mlp { input_dim, hidden, samples, separation } => {
                    let mlp = MlpSpec {
                        separation: *separation,
                        ..MlpSpec::new(*input_dim, *hidden, *samples, seed)
                    }
                    .build()?;
                    let w0 = mlp.initial_weights().clone();
                    (Arc::new(mlp.clone()), ProblemKind::Mlp(mlp), Some(w0))
                }
            };
        let dim = objective.dim();
        let layout = match &kind {
            ProblemKind::Mlp(mlp) => mlp.layout(),
            _ => GroupLayout::flat(dim),
        };
        let initial = default_init.unwrap_or_else(|| ParamVector::filled(dim, 1.0));
        Ok(Problem { objective, layout, initial, kind })
    }
}

impl Problem {
    pub fn dim(&self) -> usize {
        self.objective.dim()
    }

    pub fn initial_point(&self, init: &InitSpec) -> Result<ParamVector> {
        let d = self.dim();
        match init {
            InitSpec::Default => Ok(self.initial.clone()),
            InitSpec::Ones => Ok(ParamVector::filled(d, 1.0)),
            InitSpec::Constant { value } => ParamVector::new(vec![*value; d]),
            InitSpec::Values { values } => {
                if values.len() != d {
                    return Err(Error::DimensionMismatch { expected: d, got: values.len() });
                }
                ParamVector::new(values.clone())
            }
        }
    }
}
