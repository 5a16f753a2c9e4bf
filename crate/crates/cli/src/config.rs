//! Experiment configuration: one JSON document with `env`, `data`, `impute`,
//! `algo`, `eval`, `reference` and `output` blocks. Every block has
//! defaults, so `{}` is the retail benchmark.

use std::path::{Path, PathBuf};

use censored_fqi::env::EnvConfig;
use censored_fqi::fqi::{FqiConfig, FqiMode};
use censored_fqi::oracle::DpConfig;
use censored_fqi::survival::ConditioningSpec;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BehaviorKind {
    Uniform,
    EpsilonSafe,
    /// The censoring-aware reference policy.
    Optimal,
}

impl BehaviorKind {
    pub fn name(&self) -> &'static str {
        match self {
            BehaviorKind::Uniform => "uniform",
            BehaviorKind::EpsilonSafe => "epsilon_safe",
            BehaviorKind::Optimal => "optimal",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub behavior: BehaviorKind,
    /// Probability of `a_max` under `epsilon_safe`.
    pub epsilon: f64,
    /// Episode counts of the ladder.
    pub episodes: Vec<usize>,
    /// Periods per trajectory.
    pub horizon: usize,
    pub seed: u64,
    pub replicates: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            behavior: BehaviorKind::Uniform,
            epsilon: 0.1,
            episodes: (1..=10).map(|k| 5 * k).collect(),
            horizon: 50,
            seed: 2024,
            replicates: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub episodes: usize,
    pub horizon: usize,
    pub gamma: f64,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            episodes: 500,
            horizon: 50,
            gamma: 0.9,
            seed: 7,
        }
    }
}

/// Settings of the two reference solvers. The discount comes from `eval`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReferenceConfig {
    pub max_sweeps: usize,
    pub ir_bins: usize,
    pub mc_samples: usize,
    pub rollouts: usize,
    pub rollout_horizon: usize,
    /// Depth cap of the censoring-aware solver; defaults to the generator's
    /// run limit, or 3 without one.
    pub n_cap: Option<usize>,
    pub seed: u64,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        let dp = DpConfig::default();
        ReferenceConfig {
            max_sweeps: dp.max_sweeps,
            ir_bins: dp.ir_bins,
            mc_samples: dp.mc_samples,
            rollouts: dp.rollouts,
            rollout_horizon: dp.rollout_horizon,
            n_cap: None,
            seed: dp.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub out_dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            out_dir: PathBuf::from("results"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvConfig,
    pub data: DataConfig,
    pub impute: ConditioningSpec,
    pub algo: FqiConfig,
    /// Variants run at every ladder cell.
    pub algos: Vec<FqiMode>,
    pub eval: EvalConfig,
    pub reference: ReferenceConfig,
    pub output: OutputConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            env: EnvConfig::default(),
            data: DataConfig::default(),
            impute: ConditioningSpec::default(),
            algo: FqiConfig {
                beta: 300.0,
                ..FqiConfig::default()
            },
            algos: vec![FqiMode::Cfqi, FqiMode::Pcfqi, FqiMode::Fusion],
            eval: EvalConfig::default(),
            reference: ReferenceConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

fn schema(path: &str, reason: impl Into<String>) -> CliError {
    CliError::Schema {
        path: path.into(),
        reason: reason.into(),
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            schema(if path == "." { "<root>" } else { &path }, e.inner().to_string())
        })
    }

    /// Reads a config file; `None` gives the defaults.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(ExperimentConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::Io {
                    path: p.to_path_buf(),
                    source: e,
                })?;
                Self::from_json(&text)
            }
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.env.validate()?;
        let d = &self.data;
        if d.episodes.is_empty() || d.episodes.contains(&0) {
            return Err(schema("data.episodes", "must be a nonempty list of counts >= 1"));
        }
        if d.horizon < 2 {
            return Err(schema("data.horizon", "must be >= 2"));
        }
        if d.replicates == 0 {
            return Err(schema("data.replicates", "must be >= 1"));
        }
        if !(0.0..=1.0).contains(&d.epsilon) {
            return Err(schema("data.epsilon", "must lie in [0, 1]"));
        }
        self.impute.validate()?;
        self.algo.validate()?;
        if self.algos.is_empty() {
            return Err(schema("algos", "must name at least one variant"));
        }
        let e = &self.eval;
        if !(0.0..1.0).contains(&e.gamma) {
            return Err(schema("eval.gamma", "must lie in [0, 1)"));
        }
        if e.episodes < 2 {
            return Err(schema("eval.episodes", "must be >= 2"));
        }
        if e.horizon == 0 {
            return Err(schema("eval.horizon", "must be >= 1"));
        }
        let r = &self.reference;
        if r.max_sweeps == 0 || r.mc_samples == 0 || r.rollouts == 0 || r.rollout_horizon == 0 {
            return Err(schema(
                "reference",
                "max_sweeps, mc_samples, rollouts and rollout_horizon must be >= 1",
            ));
        }
        if let (Some(cap), Some(n)) = (r.n_cap, self.env.n_true) {
            if cap < n {
                return Err(schema(
                    "reference.n_cap",
                    format!("must be >= the generator run limit {n}"),
                ));
            }
        }
        Ok(())
    }

    pub fn dp_config(&self) -> DpConfig {
        let r = &self.reference;
        DpConfig {
            gamma: self.eval.gamma,
            max_sweeps: r.max_sweeps,
            ir_bins: r.ir_bins,
            mc_samples: r.mc_samples,
            rollouts: r.rollouts,
            rollout_horizon: r.rollout_horizon,
            n_cap: r.n_cap.or(self.env.n_true).unwrap_or(3),
            seed: r.seed,
        }
    }

    /// Smaller evaluation and reference budgets for smoke runs.
    pub fn make_quick(&mut self) {
        self.eval.episodes = self.eval.episodes.min(50);
        self.reference.rollouts = self.reference.rollouts.min(200);
    }

    /// Hash of everything that determines results (the output location is
    /// excluded).
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output = OutputConfig::default();
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(&Sha256::digest(&bytes)[..8])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_default() {
        let c = ExperimentConfig::from_json("{}").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        c.validate().unwrap();
    }

    #[test]
    fn invalid_gamma_names_path() {
        let c = ExperimentConfig::from_json(r#"{"eval": {"gamma": 1.2}}"#).unwrap();
        match c.validate() {
            Err(CliError::Schema { path, .. }) => assert_eq!(path, "eval.gamma"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn type_errors_carry_path() {
        match ExperimentConfig::from_json(r#"{"data": {"horizon": "long"}}"#) {
            Err(CliError::Schema { path, .. }) => assert_eq!(path, "data.horizon"),
            other => panic!("unexpected {other:?}"),
        }
        match ExperimentConfig::from_json(r#"{"eval": {"gama": 0.5}}"#) {
            Err(CliError::Schema { path, .. }) => assert!(path.starts_with("eval")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn hash_ignores_output_dir() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.output.out_dir = "elsewhere".into();
        assert_eq!(a.hash(), b.hash());
        b.eval.seed += 1;
        assert_ne!(a.hash(), b.hash());
    }
}
