use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Library(#[from] clipsharp::Error),

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error("output directory {} is locked by another run (remove {} if stale)", dir.display(), lock.display())]
    Locked { dir: PathBuf, lock: PathBuf },

    #[error("descent-lemma inequality violated at {0} step(s) with all hypotheses satisfied")]
    LemmaViolated(usize),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    /// 1 for usage and configuration problems, 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        use clipsharp::Error as E;
        match self {
            CliError::Library(
                E::Diverged { .. }
                | E::NumericOverflow(_)
                | E::NonFiniteEntry { .. }
                | E::DegenerateRemoval(_),
            )
            | CliError::LemmaViolated(_) => 2,
            _ => 1,
        }
    }
}
