//! Censoring-run arithmetic: the data-supported depth `n̂` and the split of
//! the augmented dataset by the number of censored periods preceding each
//! transition.

use serde::{Deserialize, Serialize};

use crate::data::OfflineDataset;
use crate::env::{Action, Observation};
use crate::error::{Error, Result};
use crate::history::HistoryBlock;
use crate::survival::AugmentedDataset;

/// `min(T, ⌈ln(NT) / (2(1 − γ))⌉)`, at least 1.
pub fn default_window_k(n_traj: usize, horizon: usize, gamma: f64) -> usize {
    let nt = (n_traj * horizon).max(2) as f64;
    let k = (nt.ln() / (2.0 * (1.0 - gamma))).ceil();
    let k = if k.is_finite() { k as usize } else { horizon };
    k.clamp(1, horizon.max(1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLengthProfile {
    pub window_k: usize,
    /// Longest censored run inside `[start, start + window_k)`, maximized
    /// over trajectories, indexed by window start.
    pub window_maxima: Vec<usize>,
    pub n_hat: usize,
}

fn check_window(ds: &OfflineDataset, window_k: usize) -> Result<()> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if window_k == 0 || window_k > ds.horizon {
        return Err(Error::InvalidArgument(format!(
            "window_k must lie in [1, {}], got {window_k}",
            ds.horizon
        )));
    }
    Ok(())
}

fn longest_run(deltas: &[bool]) -> usize {
    let mut best = 0;
    let mut run = 0;
    for &d in deltas {
        run = if d { 0 } else { run + 1 };
        best = best.max(run);
    }
    best
}

pub fn run_length_profile(ds: &OfflineDataset, window_k: usize) -> Result<RunLengthProfile> {
    check_window(ds, window_k)?;
    let per_traj = ds.per_traj();
    let starts = per_traj.saturating_sub(window_k) + 1;
    let mut window_maxima = vec![0usize; starts];
    let mut deltas = Vec::with_capacity(per_traj);
    for traj in ds.trajectories() {
        deltas.clear();
        deltas.extend(traj.iter().map(|tr| tr.delta));
        for (s, slot) in window_maxima.iter_mut().enumerate() {
            let end = (s + window_k).min(deltas.len());
            *slot = (*slot).max(longest_run(&deltas[s..end]));
        }
    }
    let n_hat = window_maxima.iter().copied().max().unwrap_or(0);
    Ok(RunLengthProfile {
        window_k,
        window_maxima,
        n_hat,
    })
}

/// Longest fully censored run that fits in a window of `window_k` periods.
pub fn estimate_n_hat(ds: &OfflineDataset, window_k: usize) -> Result<usize> {
    check_window(ds, window_k)?;
    let longest = ds
        .trajectories()
        .map(|traj| longest_run(&traj.iter().map(|tr| tr.delta).collect::<Vec<_>>()))
        .max()
        .unwrap_or(0);
    Ok(longest.min(window_k))
}

/// Number of consecutive censored periods immediately before each
/// transition, with `Δ_{−1} = 1` at the start of every trajectory.
pub fn preceding_runs(ds: &OfflineDataset) -> Vec<usize> {
    let mut out = Vec::with_capacity(ds.len());
    for traj in ds.trajectories() {
        let mut run = 0;
        for tr in traj {
            out.push(run);
            run = if tr.delta { 0 } else { run + 1 };
        }
    }
    out
}

/// One element of bucket `i`: the depth-`i` block ending at `W_t`, the
/// action taken, the completed reward and the next observation.
#[derive(Debug, Clone, PartialEq)]
pub struct BucketRecord {
    /// Position of the transition in the dataset.
    pub index: usize,
    pub block: HistoryBlock,
    pub action: Action,
    pub r_star: f64,
    pub w_next: Observation,
    pub delta: bool,
}

impl BucketRecord {
    /// The depth-`i + 1` block reached when period `t` is censored.
    pub fn extended(&self) -> HistoryBlock {
        self.block.extend(self.action, self.w_next.clone())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DepthPartition {
    pub n_hat: usize,
    pub buckets: Vec<Vec<BucketRecord>>,
    /// Transitions without a complete block inside their trajectory.
    pub discarded: usize,
}

impl DepthPartition {
    pub fn sizes(&self) -> Vec<usize> {
        self.buckets.iter().map(Vec::len).collect()
    }

    pub fn total(&self) -> usize {
        self.buckets.iter().map(Vec::len).sum()
    }
}

pub fn partition(aug: &AugmentedDataset, n_hat: usize) -> Result<DepthPartition> {
    let ds = &aug.data;
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let runs = preceding_runs(ds);
    let mut buckets = vec![Vec::new(); n_hat + 1];
    let mut discarded = 0;
    let per_traj = ds.per_traj();
    for (k, tr) in ds.transitions.iter().enumerate() {
        let run = runs[k];
        if run > n_hat {
            return Err(Error::InconsistentDepth {
                traj: tr.traj,
                t: tr.t,
                run,
                n_hat,
            });
        }
        if run == n_hat && !tr.delta {
            return Err(Error::InconsistentDepth {
                traj: tr.traj,
                t: tr.t,
                run: run + 1,
                n_hat,
            });
        }
        let offset = k % per_traj;
        if run > offset {
            discarded += 1;
            continue;
        }
        let steps = ds.transitions[k - run..k]
            .iter()
            .map(|p| (p.w.clone(), p.a))
            .collect();
        buckets[run].push(BucketRecord {
            index: k,
            block: HistoryBlock {
                steps,
                current: tr.w.clone(),
            },
            action: tr.a,
            r_star: aug.r_star[k],
            w_next: tr.w_next.clone(),
            delta: tr.delta,
        });
    }
    Ok(DepthPartition {
        n_hat,
        buckets,
        discarded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{DatasetMeta, ObservedTransition};
    use crate::env::EnvConfig;

    fn obs(y: f64, delta_prev: bool) -> Observation {
        Observation {
            x: vec![],
            y,
            z_prev: y,
            delta_prev,
        }
    }

    /// Builds a dataset whose trajectories follow the given Δ sequences.
    pub(crate) fn from_deltas(seqs: &[Vec<bool>]) -> OfflineDataset {
        let per_traj = seqs[0].len();
        let mut transitions = Vec::new();
        for (j, seq) in seqs.iter().enumerate() {
            assert_eq!(seq.len(), per_traj);
            let mut prev = true;
            for (t, &delta) in seq.iter().enumerate() {
                transitions.push(ObservedTransition {
                    traj: j,
                    t,
                    w: obs(t as f64, prev),
                    a: Action { p: 4.0, o: 0.0 },
                    w_next: obs(t as f64 + 1.0, delta),
                    r_obs: delta.then_some(1.0),
                    delta,
                    z: 0.0,
                });
                prev = delta;
            }
        }
        let env = EnvConfig::default();
        OfflineDataset {
            meta: DatasetMeta {
                fingerprint: env.fingerprint(),
                seed: 0,
                behavior: "test".into(),
                env,
            },
            n_traj: seqs.len(),
            horizon: per_traj + 1,
            transitions,
        }
    }

    fn augment(ds: OfflineDataset) -> AugmentedDataset {
        let r_star = vec![0.0; ds.len()];
        AugmentedDataset { data: ds, r_star }
    }

    #[test]
    fn n_hat_examples() {
        let ds = from_deltas(&[vec![true; 5]]);
        assert_eq!(estimate_n_hat(&ds, 5).unwrap(), 0);
        let ds = from_deltas(&[vec![true, false, false, true, false]]);
        assert_eq!(estimate_n_hat(&ds, 5).unwrap(), 2);
        assert_eq!(run_length_profile(&ds, 5).unwrap().n_hat, 2);
        assert_eq!(estimate_n_hat(&ds, 1).unwrap(), 1);
        assert!(estimate_n_hat(&ds, 0).is_err());
        assert!(estimate_n_hat(&ds, 7).is_err());
    }

    #[test]
    fn profile_windows() {
        let ds = from_deltas(&[vec![false, false, true, true, false, true]]);
        let prof = run_length_profile(&ds, 3).unwrap();
        assert_eq!(prof.window_maxima, vec![2, 1, 1, 1]);
        assert_eq!(prof.n_hat, 2);
    }

    #[test]
    fn partition_examples() {
        let ds = from_deltas(&[vec![true, false, true, false, false, true]]);
        let part = partition(&augment(ds), 2).unwrap();
        assert_eq!(part.sizes(), vec![3, 2, 1]);
        assert_eq!(part.discarded, 0);
        let depth1 = &part.buckets[1][0];
        assert_eq!(depth1.block.depth(), 1);
        assert!(depth1.block.anchor().delta_prev);
        assert!(!depth1.block.current.delta_prev);
        let depth2 = &part.buckets[2][0];
        assert_eq!(depth2.index, 5);
        assert_eq!(depth2.block.steps.len(), 2);
        assert_eq!(depth2.extended().depth(), 3);
    }

    #[test]
    fn partition_rejects_small_n_hat() {
        let ds = from_deltas(&[vec![true, false, false, true]]);
        assert!(matches!(
            partition(&augment(ds), 1),
            Err(Error::InconsistentDepth { .. })
        ));
    }

    #[test]
    fn default_window_schedule() {
        assert_eq!(default_window_k(5, 50, 0.9), 28);
        assert_eq!(default_window_k(50, 50, 0.99), 50);
        assert_eq!(default_window_k(1, 2, 0.0), 1);
    }
}
