//! Behavior policies, offline trajectory generation and dataset files.
//!
//! A dataset file is newline-delimited JSON: one header record followed by
//! one record per transition, grouped by trajectory in time order.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, RngCore};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{Action, EnvConfig, Environment, Episode, Observation};
use crate::error::{Error, Result};
use crate::fqi::PolicyArtifact;
use crate::rng::stream;

/// What a policy chose and whether the censoring-depth boundary forced it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub action: Action,
    /// `a_max` was played because the censoring depth reached the learned cap.
    pub boundary: bool,
    /// The depth exceeded anything seen in training.
    pub out_of_support: bool,
}

impl Decision {
    pub fn plain(action: Action) -> Self {
        Decision {
            action,
            boundary: false,
            out_of_support: false,
        }
    }
}

/// Anything that can act in the simulator. Policies see the observed window;
/// the latent state is exposed only so that full-information references can
/// be rolled out through the same machinery.
pub trait Policy: Send + Sync {
    fn name(&self) -> String;

    /// Past steps the policy needs to see.
    fn window_cap(&self) -> usize {
        1
    }

    fn decide(&self, episode: &Episode<'_>, rng: &mut dyn RngCore) -> Decision;
}

/// Data-generating policies.
#[derive(Debug, Clone)]
pub enum BehaviorPolicy {
    Uniform,
    /// `a_max` with probability `epsilon`, otherwise uniform.
    EpsilonSafe { epsilon: f64 },
    /// A trained or oracle artifact used as the logging policy.
    PluginOptimal(Arc<PolicyArtifact>),
}

impl BehaviorPolicy {
    pub fn epsilon_safe(epsilon: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::config("data.epsilon", "must lie in [0, 1]"));
        }
        Ok(BehaviorPolicy::EpsilonSafe { epsilon })
    }

    /// Probability of each grid action (grid order) in the current state.
    pub fn action_probs(&self, episode: &Episode<'_>) -> Vec<f64> {
        let grid = episode.env().grid();
        let n = grid.len();
        match self {
            BehaviorPolicy::Uniform => vec![1.0 / n as f64; n],
            BehaviorPolicy::EpsilonSafe { epsilon } => {
                let mut probs = vec![(1.0 - epsilon) / n as f64; n];
                let idx = grid.index_of(&grid.a_max()).expect("a_max on grid");
                probs[idx] += epsilon;
                probs
            }
            BehaviorPolicy::PluginOptimal(artifact) => {
                let mut probs = vec![0.0; n];
                let a = artifact.act(episode).action;
                probs[grid.index_of(&a).expect("artifact acts on grid")] = 1.0;
                probs
            }
        }
    }
}

/// Wraps an artifact as a behavior policy after checking it was built for
/// the same action grid and observation layout.
pub fn plugin_optimal_policy(artifact: PolicyArtifact, env: &EnvConfig) -> Result<BehaviorPolicy> {
    artifact.check_compatible(env)?;
    Ok(BehaviorPolicy::PluginOptimal(Arc::new(artifact)))
}

impl Policy for BehaviorPolicy {
    fn name(&self) -> String {
        match self {
            BehaviorPolicy::Uniform => "uniform".into(),
            BehaviorPolicy::EpsilonSafe { epsilon } => format!("epsilon_safe({epsilon})"),
            BehaviorPolicy::PluginOptimal(a) => format!("plugin_optimal({})", a.kind_name()),
        }
    }

    fn window_cap(&self) -> usize {
        match self {
            BehaviorPolicy::PluginOptimal(a) => a.window_cap(),
            _ => 1,
        }
    }

    fn decide(&self, episode: &Episode<'_>, rng: &mut dyn RngCore) -> Decision {
        let grid = episode.env().grid();
        match self {
            BehaviorPolicy::Uniform => Decision::plain(grid.action(rng.random_range(0..grid.len()))),
            BehaviorPolicy::EpsilonSafe { epsilon } => {
                if rng.random::<f64>() < *epsilon {
                    Decision::plain(grid.a_max())
                } else {
                    Decision::plain(grid.action(rng.random_range(0..grid.len())))
                }
            }
            BehaviorPolicy::PluginOptimal(artifact) => artifact.act(episode),
        }
    }
}

/// One logged tuple `(W_t, A_t, W_{t+1}, R_t·[Δ_t = 1])`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedTransition {
    pub traj: usize,
    pub t: usize,
    pub w: Observation,
    pub a: Action,
    pub w_next: Observation,
    /// Present exactly when `delta` holds.
    pub r_obs: Option<f64>,
    pub delta: bool,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub fingerprint: String,
    pub seed: u64,
    pub behavior: String,
    pub env: EnvConfig,
}

/// `n_traj` trajectories of `horizon − 1` transitions each, stored
/// trajectory-major in time order.
#[derive(Debug, Clone, PartialEq)]
pub struct OfflineDataset {
    pub meta: DatasetMeta,
    pub n_traj: usize,
    pub horizon: usize,
    pub transitions: Vec<ObservedTransition>,
}

impl OfflineDataset {
    pub fn per_traj(&self) -> usize {
        self.horizon - 1
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn trajectories(&self) -> impl Iterator<Item = &[ObservedTransition]> {
        self.transitions.chunks(self.per_traj().max(1))
    }

    /// The first `n` trajectories. Datasets generated from one seed are
    /// nested, so this equals generating `n` trajectories directly.
    pub fn prefix(&self, n: usize) -> OfflineDataset {
        let n = n.min(self.n_traj);
        OfflineDataset {
            meta: self.meta.clone(),
            n_traj: n,
            horizon: self.horizon,
            transitions: self.transitions[..n * self.per_traj()].to_vec(),
        }
    }
}

/// Latent quantities the learner never sees; kept for verification.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrueOutcome {
    pub demand: f64,
    pub reward: f64,
    pub d_prev: f64,
}

/// Rolls out `n_traj` independent trajectories under `policy`.
pub fn generate_dataset(
    env: &Environment,
    policy: &dyn Policy,
    n_traj: usize,
    horizon: usize,
    seed: u64,
) -> Result<OfflineDataset> {
    generate_dataset_with_truth(env, policy, n_traj, horizon, seed).map(|(ds, _)| ds)
}

/// As [`generate_dataset`], also returning the hidden demand and true
/// reward of every transition.
pub fn generate_dataset_with_truth(
    env: &Environment,
    policy: &dyn Policy,
    n_traj: usize,
    horizon: usize,
    seed: u64,
) -> Result<(OfflineDataset, Vec<TrueOutcome>)> {
    if n_traj == 0 {
        return Err(Error::InvalidArgument("n_traj must be >= 1".into()));
    }
    if horizon < 2 {
        return Err(Error::InvalidArgument("horizon must be >= 2".into()));
    }
    let cap = policy.window_cap().max(1);
    let trajectories: Vec<Vec<(ObservedTransition, TrueOutcome)>> = (0..n_traj)
        .into_par_iter()
        .map(|j| {
            let mut rng = stream(seed, j as u64);
            let mut ep = Episode::start(env, cap, &mut rng);
            let mut rows = Vec::with_capacity(horizon - 1);
            for t in 0..horizon - 1 {
                let w = ep.window().current().clone();
                let d_prev = ep.state().d_prev;
                let a = policy.decide(&ep, &mut rng).action;
                let out = ep.advance(a, &mut rng);
                let tr = ObservedTransition {
                    traj: j,
                    t,
                    w,
                    a,
                    w_next: ep.window().current().clone(),
                    r_obs: out.delta.then_some(out.reward),
                    delta: out.delta,
                    z: out.z,
                };
                rows.push((
                    tr,
                    TrueOutcome {
                        demand: out.demand,
                        reward: out.reward,
                        d_prev,
                    },
                ));
            }
            rows
        })
        .collect();
    let (transitions, truth) = trajectories.into_iter().flatten().unzip();
    let cfg = env.config().clone();
    Ok((
        OfflineDataset {
            meta: DatasetMeta {
                fingerprint: cfg.fingerprint(),
                seed,
                behavior: policy.name(),
                env: cfg,
            },
            n_traj,
            horizon,
            transitions,
        },
        truth,
    ))
}

const FORMAT: &str = "cfqi-dataset";
const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    version: u32,
    fingerprint: String,
    n_traj: usize,
    horizon: usize,
    seed: u64,
    behavior: String,
    augmented: bool,
    env: EnvConfig,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    traj: usize,
    t: usize,
    x: Vec<f64>,
    y: f64,
    z_prev: f64,
    delta_prev: bool,
    p: f64,
    o: f64,
    z: f64,
    delta: bool,
    r_obs: Option<f64>,
    x_next: Vec<f64>,
    y_next: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    r_star: Option<f64>,
}

impl Record {
    fn from_transition(tr: &ObservedTransition, r_star: Option<f64>) -> Self {
        Record {
            traj: tr.traj,
            t: tr.t,
            x: tr.w.x.clone(),
            y: tr.w.y,
            z_prev: tr.w.z_prev,
            delta_prev: tr.w.delta_prev,
            p: tr.a.p,
            o: tr.a.o,
            z: tr.z,
            delta: tr.delta,
            r_obs: tr.r_obs,
            x_next: tr.w_next.x.clone(),
            y_next: tr.w_next.y,
            r_star,
        }
    }

    fn into_transition(self) -> (ObservedTransition, Option<f64>) {
        let tr = ObservedTransition {
            traj: self.traj,
            t: self.t,
            w: Observation {
                x: self.x,
                y: self.y,
                z_prev: self.z_prev,
                delta_prev: self.delta_prev,
            },
            a: Action {
                p: self.p,
                o: self.o,
            },
            w_next: Observation {
                x: self.x_next,
                y: self.y_next,
                z_prev: self.z,
                delta_prev: self.delta,
            },
            r_obs: self.r_obs,
            delta: self.delta,
            z: self.z,
        };
        (tr, self.r_star)
    }
}

/// Writes a dataset, optionally with imputed rewards attached.
pub(crate) fn write_records(
    ds: &OfflineDataset,
    r_star: Option<&[f64]>,
    path: &Path,
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let header = Header {
        format: FORMAT.into(),
        version: VERSION,
        fingerprint: ds.meta.fingerprint.clone(),
        n_traj: ds.n_traj,
        horizon: ds.horizon,
        seed: ds.meta.seed,
        behavior: ds.meta.behavior.clone(),
        augmented: r_star.is_some(),
        env: ds.meta.env.clone(),
    };
    let io = |e: std::io::Error| Error::io(path, e);
    serde_json::to_writer(&mut out, &header).map_err(|e| Error::io(path, e.into()))?;
    out.write_all(b"\n").map_err(io)?;
    for (k, tr) in ds.transitions.iter().enumerate() {
        let rec = Record::from_transition(tr, r_star.map(|r| r[k]));
        serde_json::to_writer(&mut out, &rec).map_err(|e| Error::io(path, e.into()))?;
        out.write_all(b"\n").map_err(io)?;
    }
    out.flush().map_err(io)
}

/// Reads a dataset file; returns imputed rewards when the file carries them.
pub(crate) fn read_records(path: &Path) -> Result<(OfflineDataset, Option<Vec<f64>>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let parse_err = |line: usize, reason: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let mut lines = reader.lines().enumerate();
    let header: Header = match lines.next() {
        Some((_, Ok(text))) => {
            serde_json::from_str(&text).map_err(|e| parse_err(1, format!("bad header: {e}")))?
        }
        Some((_, Err(e))) => return Err(Error::io(path, e)),
        None => return Err(parse_err(1, "missing header".into())),
    };
    if header.format != FORMAT || header.version != VERSION {
        return Err(parse_err(
            1,
            format!(
                "unsupported format {} v{} (expected {FORMAT} v{VERSION})",
                header.format, header.version
            ),
        ));
    }
    if header.env.fingerprint() != header.fingerprint {
        return Err(parse_err(1, "fingerprint does not match embedded env config".into()));
    }
    header
        .env
        .validate()
        .map_err(|e| parse_err(1, format!("embedded env config: {e}")))?;
    if header.horizon < 2 || header.n_traj == 0 {
        return Err(parse_err(1, "n_traj must be >= 1 and horizon >= 2".into()));
    }
    let per_traj = header.horizon - 1;
    let expected = header.n_traj * per_traj;
    let mut transitions = Vec::with_capacity(expected);
    let mut r_star = Vec::new();
    let mut last_line = 1;
    for (idx, line) in lines {
        let line_no = idx + 1;
        let text = line.map_err(|e| Error::io(path, e))?;
        if text.trim().is_empty() {
            continue;
        }
        last_line = line_no;
        let rec: Record = serde_json::from_str(&text)
            .map_err(|e| parse_err(line_no, format!("record {}: {e}", transitions.len())))?;
        let (tr, rs) = rec.into_transition();
        let k = transitions.len();
        if k >= expected {
            return Err(parse_err(line_no, format!("more than the {expected} declared records")));
        }
        if (tr.traj, tr.t) != (k / per_traj, k % per_traj) {
            return Err(parse_err(
                line_no,
                format!(
                    "expected traj {} t {}, found traj {} t {}",
                    k / per_traj,
                    k % per_traj,
                    tr.traj,
                    tr.t
                ),
            ));
        }
        if tr.r_obs.is_some() != tr.delta {
            return Err(parse_err(
                line_no,
                "r_obs must be present exactly when delta is true".into(),
            ));
        }
        if tr.z > tr.w.y {
            return Err(parse_err(line_no, "sales exceed inventory".into()));
        }
        if rs.is_some() != header.augmented {
            return Err(parse_err(line_no, "r_star presence disagrees with header".into()));
        }
        if let (Some(r), Some(obs)) = (rs, tr.r_obs) {
            if r != obs {
                return Err(parse_err(line_no, "r_star differs from r_obs on an uncensored record".into()));
            }
        }
        if tr.t > 0 {
            let prev: &ObservedTransition = &transitions[k - 1];
            if prev.w_next != tr.w {
                return Err(parse_err(line_no, "observation does not continue the previous record".into()));
            }
        } else if !tr.w.delta_prev {
            return Err(parse_err(line_no, "first period must have delta_prev = true".into()));
        }
        transitions.push(tr);
        if let Some(r) = rs {
            r_star.push(r);
        }
    }
    if transitions.len() != expected {
        return Err(parse_err(
            last_line + 1,
            format!(
                "file ends after {} records; header declares {expected}",
                transitions.len()
            ),
        ));
    }
    let ds = OfflineDataset {
        meta: DatasetMeta {
            fingerprint: header.fingerprint,
            seed: header.seed,
            behavior: header.behavior,
            env: header.env,
        },
        n_traj: header.n_traj,
        horizon: header.horizon,
        transitions,
    };
    Ok((ds, header.augmented.then_some(r_star)))
}

pub fn save_dataset(ds: &OfflineDataset, path: impl AsRef<Path>) -> Result<()> {
    write_records(ds, None, path.as_ref())
}

/// Loads a raw dataset. Imputed rewards in augmented files are ignored.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<OfflineDataset> {
    read_records(path.as_ref()).map(|(ds, _)| ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::EnvConfig;

    fn env() -> Environment {
        Environment::new(EnvConfig::default()).unwrap()
    }

    #[test]
    fn shapes_and_invariants() {
        let env = env();
        let ds = generate_dataset(&env, &BehaviorPolicy::Uniform, 5, 50, 11).unwrap();
        assert_eq!(ds.len(), 5 * 49);
        let ds2 = generate_dataset(&env, &BehaviorPolicy::Uniform, 3, 2, 11).unwrap();
        assert_eq!(ds2.len(), 3);
        for tr in &ds.transitions {
            assert_eq!(tr.r_obs.is_some(), tr.delta);
            assert!(tr.z <= tr.w.y);
        }
        for traj in ds.trajectories() {
            assert!(traj[0].w.delta_prev);
            let mut run = 0;
            for tr in traj {
                run = if tr.delta { 0 } else { run + 1 };
                assert!(run <= 3);
            }
        }
    }

    #[test]
    fn deterministic_and_nested() {
        let env = env();
        let a = generate_dataset(&env, &BehaviorPolicy::Uniform, 6, 20, 3).unwrap();
        let b = generate_dataset(&env, &BehaviorPolicy::Uniform, 6, 20, 3).unwrap();
        assert_eq!(a, b);
        let c = generate_dataset(&env, &BehaviorPolicy::Uniform, 4, 20, 3).unwrap();
        assert_eq!(a.prefix(4).transitions, c.transitions);
    }

    #[test]
    fn invalid_sizes_rejected() {
        let env = env();
        assert!(generate_dataset(&env, &BehaviorPolicy::Uniform, 0, 20, 3).is_err());
        assert!(generate_dataset(&env, &BehaviorPolicy::Uniform, 1, 1, 3).is_err());
        assert!(BehaviorPolicy::epsilon_safe(1.5).is_err());
    }

    #[test]
    fn epsilon_probs_sum_to_one() {
        let env = env();
        let mut rng = stream(1, 0);
        let ep = Episode::start(&env, 1, &mut rng);
        let probs = BehaviorPolicy::EpsilonSafe { epsilon: 0.3 }.action_probs(&ep);
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((probs[47] - (0.3 + 0.7 / 48.0)).abs() < 1e-12);
    }
}
