use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Invalid configuration or arguments; exit code 2.
    #[error("invalid configuration at `{path}`: {reason}")]
    Schema { path: String, reason: String },
    /// A pipeline stage failed; exit code 1.
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: censored_fqi::Error,
    },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("writing {}: {reason}", path.display())]
    Output { path: PathBuf, reason: String },
    /// Some ladder cells failed; the other outputs were still written.
    #[error("{count} experiment cells failed in stage(s) {stages}; see {}", failures.display())]
    CellFailures {
        count: usize,
        stages: String,
        failures: PathBuf,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Schema { .. } => 2,
            _ => 1,
        }
    }

    pub fn stage(stage: &'static str) -> impl FnOnce(censored_fqi::Error) -> CliError {
        move |source| CliError::Stage { stage, source }
    }
}

impl From<censored_fqi::Error> for CliError {
    /// Only configuration errors convert implicitly; everything else goes
    /// through [`CliError::stage`].
    fn from(e: censored_fqi::Error) -> Self {
        match e {
            censored_fqi::Error::Config { path, reason } => CliError::Schema { path, reason },
            other => CliError::Stage {
                stage: "config",
                source: other,
            },
        }
    }
}
