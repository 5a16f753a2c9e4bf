use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration at `{path}`: {reason}")]
    Config { path: String, reason: String },

    #[error("{path}:{line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("history block has depth {found}, expected {expected}")]
    DepthMismatch { expected: usize, found: usize },

    #[error(
        "transition (traj {traj}, t {t}) is preceded by {run} censored periods but n_hat is {n_hat}"
    )]
    InconsistentDepth {
        traj: usize,
        t: usize,
        run: usize,
        n_hat: usize,
    },

    #[error("coverage failure: no transitions preceded by exactly {depth} censored periods (n_hat = {n_hat}); collect more data or lower the window")]
    EmptyBucket { depth: usize, n_hat: usize },

    #[error("survival tail is degenerate at y = {y} (SF = {sf:.3e})")]
    DegenerateTail { y: f64, sf: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("incompatible artifact: {0}")]
    Incompatible(String),

    #[error("value iteration is not contracting: sup-norm delta grew for {0} consecutive sweeps")]
    NonContraction(usize),
}

impl Error {
    pub(crate) fn config(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
