//! Command-line runner for censored fitted Q-iteration experiments.

pub mod config;
pub mod error;
pub mod experiment;

use std::path::PathBuf;

use censored_fqi::fqi::FqiMode;
use clap::{Args, Parser, Subcommand};
use log::info;

use crate::config::{BehaviorKind, ExperimentConfig};
use crate::error::CliError;
use crate::experiment::{cmd_evaluate, cmd_experiment, cmd_generate, cmd_impute, cmd_train};

#[derive(Debug, Parser)]
#[command(name = "cfqi", version, about = "Offline pricing and inventory experiments under censored demand")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate an offline dataset under the behavior policy.
    Generate {
        #[command(flatten)]
        common: CommonArgs,
        /// Dataset path (default `<out-dir>/dataset.ndjson`).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Fit the survival model and complete censored rewards.
    Impute {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        input: Option<PathBuf>,
        /// Default `<out-dir>/augmented.ndjson`.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Train one variant on an augmented dataset.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        input: Option<PathBuf>,
        /// Default `<out-dir>/policy-<algo>.json`.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Monte-Carlo evaluation of a policy artifact.
    Evaluate {
        #[command(flatten)]
        common: CommonArgs,
        /// Default `<out-dir>/policy-<algo>.json`.
        #[arg(long)]
        policy: Option<PathBuf>,
        /// Default `<out-dir>/eval-<policy file stem>.json`.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run the full episode ladder and write `results.csv`.
    Experiment {
        #[command(flatten)]
        common: CommonArgs,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// JSON experiment configuration; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Base seed of data generation and training.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of replicates (independent datasets).
    #[arg(long, visible_alias = "seeds")]
    pub replicates: Option<usize>,
    /// Largest episode count; the ladder climbs to it in steps of 5.
    #[arg(long)]
    pub episodes: Option<usize>,
    #[arg(long, value_parser = ["uniform", "optimal", "epsilon_safe"])]
    pub behavior: Option<String>,
    /// Variant to train; `experiment` runs only this one when given.
    #[arg(long, value_parser = ["cfqi", "pcfqi", "fusion"])]
    pub algo: Option<String>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Small evaluation and reference budgets for smoke runs.
    #[arg(long)]
    pub quick: bool,
}

/// Episode counts 5, 10, … up to `max`, ending at `max` itself.
pub fn ladder_to(max: usize) -> Vec<usize> {
    let mut v: Vec<usize> = (1..).map(|k| 5 * k).take_while(|&n| n <= max).collect();
    if v.last() != Some(&max) {
        v.push(max);
    }
    v
}

impl CommonArgs {
    /// Loads the configuration and applies command-line overrides.
    pub fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = ExperimentConfig::load(self.config.as_deref())?;
        if let Some(s) = self.seed {
            cfg.data.seed = s;
        }
        if let Some(r) = self.replicates {
            cfg.data.replicates = r;
        }
        if let Some(n) = self.episodes {
            if n == 0 {
                return Err(CliError::Schema {
                    path: "--episodes".into(),
                    reason: "must be >= 1".into(),
                });
            }
            cfg.data.episodes = ladder_to(n);
        }
        if let Some(b) = &self.behavior {
            cfg.data.behavior = match b.as_str() {
                "uniform" => BehaviorKind::Uniform,
                "optimal" => BehaviorKind::Optimal,
                _ => BehaviorKind::EpsilonSafe,
            };
        }
        if let Some(a) = &self.algo {
            cfg.algos = vec![FqiMode::parse(a).expect("clap restricts the value")];
        }
        if let Some(d) = &self.out_dir {
            cfg.output.out_dir = d.clone();
        }
        if self.quick {
            cfg.make_quick();
        }
        Ok(cfg)
    }

    fn mode(&self) -> FqiMode {
        self.algo.as_deref().and_then(FqiMode::parse).unwrap_or(FqiMode::Cfqi)
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Generate { common, output } => {
            let cfg = common.resolve()?;
            let out = output.unwrap_or_else(|| cfg.output.out_dir.join("dataset.ndjson"));
            cmd_generate(&cfg, &out)?;
            println!("{}", out.display());
        }
        Command::Impute {
            common,
            input,
            output,
        } => {
            let cfg = common.resolve()?;
            let dir = &cfg.output.out_dir;
            let input = input.unwrap_or_else(|| dir.join("dataset.ndjson"));
            let out = output.unwrap_or_else(|| dir.join("augmented.ndjson"));
            let report = cmd_impute(&cfg, &input, &out)?;
            println!("{}", serde_json::to_string(&report).expect("report serializes"));
        }
        Command::Train {
            common,
            input,
            output,
        } => {
            let cfg = common.resolve()?;
            let mode = common.mode();
            let dir = &cfg.output.out_dir;
            let input = input.unwrap_or_else(|| dir.join("augmented.ndjson"));
            let out = output.unwrap_or_else(|| dir.join(format!("policy-{}.json", mode.name())));
            let report = cmd_train(&cfg, &input, mode, &out)?;
            println!("{}", serde_json::to_string(&report).expect("report serializes"));
        }
        Command::Evaluate {
            common,
            policy,
            output,
        } => {
            let cfg = common.resolve()?;
            let dir = &cfg.output.out_dir;
            let policy =
                policy.unwrap_or_else(|| dir.join(format!("policy-{}.json", common.mode().name())));
            let stem = policy
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "policy".into());
            let out = output.unwrap_or_else(|| dir.join(format!("eval-{stem}.json")));
            let report = cmd_evaluate(&cfg, &policy, &out)?;
            println!("{}", serde_json::to_string(&report).expect("report serializes"));
        }
        Command::Experiment { common } => {
            let cfg = common.resolve()?;
            let summary = cmd_experiment(&cfg)?;
            info!(
                "{} rows ({} computed) in {}",
                summary.rows.len(),
                summary.computed,
                summary.results.display()
            );
            println!("{}", summary.results.display());
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ladder_steps_by_five() {
        assert_eq!(ladder_to(5), vec![5]);
        assert_eq!(ladder_to(20), vec![5, 10, 15, 20]);
        assert_eq!(ladder_to(12), vec![5, 10, 12]);
        assert_eq!(ladder_to(3), vec![3]);
    }

    #[test]
    fn overrides_apply() {
        let args = CommonArgs {
            episodes: Some(5),
            replicates: Some(2),
            behavior: Some("optimal".into()),
            quick: true,
            ..CommonArgs::default()
        };
        let cfg = args.resolve().unwrap();
        assert_eq!(cfg.data.episodes, vec![5]);
        assert_eq!(cfg.data.replicates, 2);
        assert_eq!(cfg.data.behavior, BehaviorKind::Optimal);
        assert_eq!(cfg.eval.episodes, 50);
    }

    #[test]
    fn cli_parses_seeds_alias() {
        let cli = Cli::try_parse_from(["cfqi", "experiment", "--seeds", "3"]).unwrap();
        match cli.command {
            Command::Experiment { common } => assert_eq!(common.replicates, Some(3)),
            _ => unreachable!(),
        }
    }
}
