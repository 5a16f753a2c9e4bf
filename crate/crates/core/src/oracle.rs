//! Reference policies and policy evaluation.
//!
//! The full-information oracle solves the underlying MDP by value iteration
//! on a discretized state space with exact demand probabilities. The
//! censoring-aware reference solves the depth-indexed Bellman system over
//! summaries of observed histories, with expectations estimated from
//! simulator draws at histories visited by exploratory rollouts.

use std::collections::HashMap;

use log::{info, warn};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::Policy;
use crate::env::{reward, Action, ActionGrid, EnvConfig, Environment, Episode, FeatureProcess};
use crate::error::{Error, Result};
use crate::fqi::{argmax_first, PolicyArtifact, PolicyBody};
use crate::history::ObservedWindow;
use crate::rng::{derive_seed, stream};
use crate::survival::r_max_bound;

/// Bin layout shared by both solvers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretizedSpace {
    pub ir_bins: usize,
    pub ir_bound: f64,
    pub econ_states: usize,
    pub y_levels: usize,
    pub d_levels: usize,
}

impl DiscretizedSpace {
    /// Interest rate in `ir_bins` equal-width bins over `±3σ`; inventory and
    /// demand on whole units.
    pub fn new(env: &EnvConfig, ir_bins: usize) -> Result<Self> {
        let (ir_bins, econ_states) = match env.features {
            FeatureProcess::None => (1, 1),
            FeatureProcess::RateEconomy { .. } => (ir_bins.max(1), 2),
        };
        let y_levels = env.y_cap.round() as usize + 1;
        let d_levels = env.demand.d_max.round() as usize + 1;
        if y_levels > 255 || d_levels > 255 {
            return Err(Error::InvalidArgument(
                "dynamic programming supports capacities and demand ceilings up to 254".into(),
            ));
        }
        Ok(DiscretizedSpace {
            ir_bins,
            ir_bound: env.features.ir_bound(),
            econ_states,
            y_levels,
            d_levels,
        })
    }

    pub fn ir_bin(&self, x: &[f64]) -> usize {
        if self.ir_bins == 1 || x.is_empty() || self.ir_bound <= 0.0 {
            return 0;
        }
        let u = (x[0] + self.ir_bound) / (2.0 * self.ir_bound);
        ((u * self.ir_bins as f64).floor() as isize).clamp(0, self.ir_bins as isize - 1) as usize
    }

    pub fn ir_center(&self, b: usize) -> f64 {
        if self.ir_bins == 1 {
            return 0.0;
        }
        let w = 2.0 * self.ir_bound / self.ir_bins as f64;
        -self.ir_bound + (b as f64 + 0.5) * w
    }

    pub fn econ(&self, x: &[f64]) -> usize {
        if self.econ_states == 1 {
            0
        } else {
            (x[1].round() as usize).min(1)
        }
    }

    pub fn y_level(&self, y: f64) -> usize {
        (y.round().max(0.0) as usize).min(self.y_levels - 1)
    }

    pub fn d_level(&self, d: f64) -> usize {
        (d.round().max(0.0) as usize).min(self.d_levels - 1)
    }

    /// Representative covariates of a bin pair.
    pub fn x_repr(&self, ir: usize, econ: usize) -> Vec<f64> {
        if self.econ_states == 1 {
            vec![]
        } else {
            vec![self.ir_center(ir), econ as f64]
        }
    }

    pub fn exo_states(&self) -> usize {
        self.ir_bins * self.econ_states
    }
}

/// Solver settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DpConfig {
    pub gamma: f64,
    pub max_sweeps: usize,
    pub ir_bins: usize,
    /// Simulator draws per action at each visited history.
    pub mc_samples: usize,
    /// Exploratory rollouts that choose the histories to expand.
    pub rollouts: usize,
    pub rollout_horizon: usize,
    /// Deepest censoring depth tracked by the censoring-aware solver.
    pub n_cap: usize,
    pub seed: u64,
}

impl Default for DpConfig {
    fn default() -> Self {
        DpConfig {
            gamma: 0.9,
            max_sweeps: 2000,
            ir_bins: 5,
            mc_samples: 1,
            rollouts: 2000,
            rollout_horizon: 50,
            n_cap: 3,
            seed: 0,
        }
    }
}

impl DpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::config("oracle.gamma", "must lie in [0, 1)"));
        }
        if self.max_sweeps == 0 {
            return Err(Error::config("oracle.max_sweeps", "must be >= 1"));
        }
        if self.mc_samples == 0 || self.rollouts == 0 || self.rollout_horizon == 0 {
            return Err(Error::config(
                "oracle.mc_samples",
                "sample, rollout and horizon counts must be >= 1",
            ));
        }
        Ok(())
    }
}

/// Solution diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueTable {
    pub gamma: f64,
    pub values: Vec<f64>,
    /// Sup-norm change of every sweep.
    pub deltas: Vec<f64>,
    pub sweeps: usize,
    pub mc_samples: usize,
    pub states: usize,
}

impl ValueTable {
    pub fn converged(&self, tolerance: f64) -> bool {
        self.deltas.last().is_some_and(|&d| d < tolerance)
    }
}

/// Tracks sweep deltas and stops on convergence or sustained growth.
struct Contraction {
    tolerance: f64,
    deltas: Vec<f64>,
    increases: usize,
}

impl Contraction {
    fn new(tolerance: f64) -> Self {
        Contraction {
            tolerance,
            deltas: Vec::new(),
            increases: 0,
        }
    }

    /// Returns `Ok(true)` once converged.
    fn record(&mut self, delta: f64) -> Result<bool> {
        if let Some(&last) = self.deltas.last() {
            if delta > last {
                self.increases += 1;
                if self.increases >= 5 {
                    return Err(Error::NonContraction(self.increases));
                }
            } else {
                self.increases = 0;
            }
        }
        self.deltas.push(delta);
        Ok(delta < self.tolerance)
    }
}

/// Exact probabilities of each demand level given discretized inputs.
struct DemandTable {
    levels: usize,
    /// Indexed `[exo][price][d_prev][k]`.
    pmf: Vec<f64>,
    n_prices: usize,
}

impl DemandTable {
    fn new(env: &EnvConfig, space: &DiscretizedSpace) -> Self {
        let levels = space.d_levels;
        let n_prices = env.grid.prices.len();
        let params = &env.demand;
        let std = Normal::new(0.0, 1.0).unwrap();
        let mut pmf = vec![0.0; space.exo_states() * n_prices * levels * levels];
        for ir in 0..space.ir_bins {
            for e in 0..space.econ_states {
                let x = space.x_repr(ir, e);
                for (pi, &p) in env.grid.prices.iter().enumerate() {
                    for dp in 0..levels {
                        let mu = params.location(&x, p, dp as f64);
                        let base = (((ir * space.econ_states + e) * n_prices + pi) * levels + dp) * levels;
                        let row = &mut pmf[base..base + levels];
                        if params.noise_sd <= 0.0 {
                            row[space.d_level(params.finalize(mu))] = 1.0;
                            continue;
                        }
                        let cdf = |v: f64| std.cdf((v - mu) / params.noise_sd);
                        for (k, slot) in row.iter_mut().enumerate() {
                            let lo = if k == 0 { 0.0 } else { cdf(k as f64 - 0.5) };
                            let hi = if k + 1 == levels { 1.0 } else { cdf(k as f64 + 0.5) };
                            *slot = (hi - lo).max(0.0);
                        }
                    }
                }
            }
        }
        DemandTable {
            levels,
            pmf,
            n_prices,
        }
    }

    fn row(&self, exo: usize, price: usize, d_prev: usize) -> &[f64] {
        let base = ((exo * self.n_prices + price) * self.levels + d_prev) * self.levels;
        &self.pmf[base..base + self.levels]
    }
}

/// `P(ir' | ir)` for the binned interest rate and `P(e' | e)`.
fn exo_transition(env: &EnvConfig, space: &DiscretizedSpace) -> Vec<Vec<f64>> {
    let n = space.exo_states();
    let mut out = vec![vec![0.0; n]; n];
    let (coeff, sd, flip) = match env.features {
        FeatureProcess::None => return vec![vec![1.0]],
        FeatureProcess::RateEconomy {
            ir_ar_coeff,
            ir_noise_sd,
            econ_switch_prob,
        } => (ir_ar_coeff, ir_noise_sd, econ_switch_prob),
    };
    let std = Normal::new(0.0, 1.0).unwrap();
    let w = 2.0 * space.ir_bound / space.ir_bins as f64;
    for ir in 0..space.ir_bins {
        let mean = coeff * space.ir_center(ir);
        let mut probs = vec![0.0; space.ir_bins];
        if sd <= 0.0 || space.ir_bins == 1 {
            probs[space.ir_bin(&[mean])] = 1.0;
        } else {
            for (b, slot) in probs.iter_mut().enumerate() {
                let lo = if b == 0 {
                    0.0
                } else {
                    std.cdf((-space.ir_bound + b as f64 * w - mean) / sd)
                };
                let hi = if b + 1 == space.ir_bins {
                    1.0
                } else {
                    std.cdf((-space.ir_bound + (b + 1) as f64 * w - mean) / sd)
                };
                *slot = (hi - lo).max(0.0);
            }
        }
        for e in 0..2 {
            for ir2 in 0..space.ir_bins {
                for e2 in 0..2 {
                    let pe = if e == e2 { 1.0 - flip } else { flip };
                    out[ir * 2 + e][ir2 * 2 + e2] = probs[ir2] * pe;
                }
            }
        }
    }
    out
}

/// Greedy full-information policy over `(ir, econ, y, d_prev, run)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleTable {
    pub space: DiscretizedSpace,
    pub run_levels: usize,
    pub actions: Vec<u16>,
}

impl OracleTable {
    fn index(&self, exo: usize, y: usize, d: usize, run: usize) -> usize {
        ((exo * self.space.y_levels + y) * self.space.d_levels + d) * self.run_levels + run
    }

    pub fn act(&self, episode: &Episode<'_>) -> Action {
        let s = episode.state();
        let sp = &self.space;
        let exo = sp.ir_bin(&s.x) * sp.econ_states + sp.econ(&s.x);
        let run = episode.censor_run().min(self.run_levels - 1);
        let idx = self.index(exo, sp.y_level(s.y), sp.d_level(s.d_prev), run);
        episode.env().grid().action(self.actions[idx] as usize)
    }
}

/// Full-information oracle on the discretized underlying MDP.
pub struct OracleModel {
    env: EnvConfig,
    space: DiscretizedSpace,
    demand: DemandTable,
    exo: Vec<Vec<f64>>,
    run_levels: usize,
}

impl OracleModel {
    pub fn new(env: &Environment, ir_bins: usize) -> Result<Self> {
        let cfg = env.config().clone();
        let space = DiscretizedSpace::new(&cfg, ir_bins)?;
        let demand = DemandTable::new(&cfg, &space);
        let exo = exo_transition(&cfg, &space);
        let run_levels = cfg.n_true.map(|n| n + 1).unwrap_or(1);
        Ok(OracleModel {
            env: cfg,
            space,
            demand,
            exo,
            run_levels,
        })
    }

    pub fn space(&self) -> &DiscretizedSpace {
        &self.space
    }

    pub fn n_states(&self) -> usize {
        self.space.exo_states() * self.space.y_levels * self.space.d_levels * self.run_levels
    }

    /// `Σ_{exo'} P(exo' | exo) V(exo', ·)` for every `exo`.
    fn continuation(&self, v: &[f64]) -> Vec<f64> {
        let inner = self.space.y_levels * self.space.d_levels * self.run_levels;
        let n = self.space.exo_states();
        let mut w = vec![0.0; n * inner];
        for exo in 0..n {
            let dst = &mut w[exo * inner..(exo + 1) * inner];
            for (exo2, &p) in self.exo[exo].iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                let src = &v[exo2 * inner..(exo2 + 1) * inner];
                for (a, b) in dst.iter_mut().zip(src) {
                    *a += p * b;
                }
            }
        }
        w
    }

    /// Bellman backups `Q(s, a)` for one state given the continuation table.
    fn q_row(&self, w: &[f64], gamma: f64, exo: usize, y: usize, d: usize, run: usize) -> Vec<f64> {
        let grid = &self.env.grid;
        let costs = &self.env.costs;
        let sp = &self.space;
        let inner = sp.y_levels * sp.d_levels * self.run_levels;
        let wexo = &w[exo * inner..(exo + 1) * inner];
        let truncated = self.env.n_true.is_some_and(|n| run >= n);
        let mut out = Vec::with_capacity(grid.len());
        let yv = y as f64;
        for (pi, &p) in grid.prices.iter().enumerate() {
            let full = self.demand.row(exo, pi, d);
            let conditioned;
            let pmf: &[f64] = if truncated {
                conditioned = truncate_pmf(full, y);
                &conditioned
            } else {
                full
            };
            for &o in &grid.orders {
                let mut q = 0.0;
                for (k, &pk) in pmf.iter().enumerate() {
                    if pk < 1e-14 {
                        continue;
                    }
                    let kv = k as f64;
                    let r = reward(costs, p, o, yv, kv);
                    let y2 = sp.y_level((yv + o - kv).max(0.0).min(self.env.y_cap));
                    let run2 = if kv <= yv { 0 } else { (run + 1).min(self.run_levels - 1) };
                    let idx = (y2 * sp.d_levels + k) * self.run_levels + run2;
                    q += pk * (r + gamma * wexo[idx]);
                }
                out.push(q);
            }
        }
        out
    }

    fn decode(&self, s: usize) -> (usize, usize, usize, usize) {
        let run = s % self.run_levels;
        let rest = s / self.run_levels;
        let d = rest % self.space.d_levels;
        let rest = rest / self.space.d_levels;
        let y = rest % self.space.y_levels;
        (rest / self.space.y_levels, y, d, run)
    }

    /// `Q(s, ·)` for an underlying state under value function `v`.
    pub fn q_values(&self, v: &[f64], gamma: f64, x: &[f64], y: f64, d_prev: f64, run: usize) -> Vec<f64> {
        let w = self.continuation(v);
        let sp = &self.space;
        let exo = sp.ir_bin(x) * sp.econ_states + sp.econ(x);
        self.q_row(&w, gamma, exo, sp.y_level(y), sp.d_level(d_prev), run.min(self.run_levels - 1))
    }

    pub fn solve(&self, cfg: &DpConfig) -> Result<(ValueTable, Vec<u16>)> {
        cfg.validate()?;
        let n = self.n_states();
        let mut v = vec![0.0; n];
        let mut policy = vec![0u16; n];
        let tol = 1e-3 * r_max_bound(&self.env);
        let mut tracker = Contraction::new(tol.max(1e-12));
        for sweep in 0..cfg.max_sweeps {
            let w = self.continuation(&v);
            let rows: Vec<(f64, u16)> = (0..n)
                .into_par_iter()
                .map(|s| {
                    let (exo, y, d, run) = self.decode(s);
                    let q = self.q_row(&w, cfg.gamma, exo, y, d, run);
                    let a = argmax_first(&q);
                    (q[a], a as u16)
                })
                .collect();
            let mut delta: f64 = 0.0;
            for (s, (val, a)) in rows.into_iter().enumerate() {
                delta = delta.max((val - v[s]).abs());
                v[s] = val;
                policy[s] = a;
            }
            if tracker.record(delta)? {
                info!("oracle value iteration converged after {} sweeps", sweep + 1);
                break;
            }
        }
        if tracker.deltas.last().is_some_and(|&d| d >= tracker.tolerance) {
            warn!("oracle value iteration stopped before reaching tolerance");
        }
        let sweeps = tracker.deltas.len();
        Ok((
            ValueTable {
                gamma: cfg.gamma,
                values: v,
                deltas: tracker.deltas,
                sweeps,
                mc_samples: 0,
                states: n,
            },
            policy,
        ))
    }
}

fn truncate_pmf(full: &[f64], y: usize) -> Vec<f64> {
    let upto = (y + 1).min(full.len());
    let mass: f64 = full[..upto].iter().sum();
    let mut out = vec![0.0; full.len()];
    if mass > 1e-15 {
        for k in 0..upto {
            out[k] = full[k] / mass;
        }
    } else {
        let mode = argmax_first(full).min(y);
        out[mode] = 1.0;
    }
    out
}

/// Value iteration on the fully observed underlying MDP, without the
/// data-collection censoring restriction.
pub fn solve_oracle_dp(env: &Environment, cfg: &DpConfig) -> Result<(ValueTable, PolicyArtifact)> {
    let model = OracleModel::new(&Environment::new(env.config().without_truncation())?, cfg.ir_bins)?;
    let (table, actions) = model.solve(cfg)?;
    let body = PolicyBody::Oracle(OracleTable {
        space: model.space.clone(),
        run_levels: model.run_levels,
        actions,
    });
    Ok((table, PolicyArtifact::new(env.config(), 0, body)))
}

/// Summary of an observed history used as the state of the
/// censoring-aware solver: depth, current covariate bins and inventory, and
/// the best available information on the last period's demand (its exact
/// value when the inventory left after a stockout reveals it, otherwise a
/// lower bound together with the previous estimate).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HistoryKey(pub u64);

impl HistoryKey {
    fn pack(fields: [usize; 7]) -> Self {
        let mut v = 0u64;
        for f in fields {
            v = (v << 8) | (f.min(255) as u64);
        }
        HistoryKey(v)
    }

    fn field(&self, i: usize) -> usize {
        ((self.0 >> (8 * (6 - i))) & 0xff) as usize
    }

    pub fn depth(&self) -> usize {
        self.field(0)
    }

    /// Depth, covariate bins and inventory only.
    pub fn coarse(&self) -> HistoryKey {
        HistoryKey(self.0 & !0xff_ffff)
    }
}

pub fn history_key(
    space: &DiscretizedSpace,
    window: &ObservedWindow,
    n_cap: usize,
    y_cap: f64,
    d_max: f64,
) -> HistoryKey {
    let depth = window.censoring_depth().min(n_cap).min(window.past_len());
    let block = window.block(depth).expect("depth bounded by window");
    let mut exact = true;
    let mut level = space.d_level(block.anchor().z_prev);
    let mut prev = 0;
    for (j, (w, a)) in block.steps.iter().enumerate() {
        let next_y = block
            .steps
            .get(j + 1)
            .map(|s| s.0.y)
            .unwrap_or(block.current.y);
        if next_y > 0.0 && next_y < y_cap {
            exact = true;
            level = space.d_level(w.y + a.o - next_y);
            prev = 0;
        } else {
            prev = level;
            level = space.d_level((w.y + a.o).min(d_max));
            exact = false;
        }
    }
    let cur = &block.current;
    HistoryKey::pack([
        depth,
        space.ir_bin(&cur.x),
        space.econ(&cur.x),
        space.y_level(cur.y),
        exact as usize,
        level,
        prev,
    ])
}

/// Greedy censoring-aware policy keyed by history summaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CensoredTable {
    pub n_cap: usize,
    pub space: DiscretizedSpace,
    pub y_cap: f64,
    pub d_max: f64,
    /// Sorted by key.
    pub actions: Vec<(HistoryKey, u16)>,
    /// Fallback by coarse key, sorted.
    pub coarse_actions: Vec<(HistoryKey, u16)>,
    pub default_action: u16,
}

impl CensoredTable {
    pub fn action_index(&self, key: HistoryKey) -> usize {
        let find = |table: &[(HistoryKey, u16)], k: HistoryKey| {
            table
                .binary_search_by(|e| e.0.cmp(&k))
                .ok()
                .map(|i| table[i].1 as usize)
        };
        find(&self.actions, key)
            .or_else(|| find(&self.coarse_actions, key.coarse()))
            .unwrap_or(self.default_action as usize)
    }

    pub fn act(&self, window: &ObservedWindow, grid: &ActionGrid) -> crate::data::Decision {
        let key = history_key(&self.space, window, self.n_cap, self.y_cap, self.d_max);
        crate::data::Decision::plain(grid.action(self.action_index(key)))
    }
}

struct Sample {
    key: HistoryKey,
    action: u16,
    censored: bool,
    reward: f64,
    next: HistoryKey,
}

/// Censoring-aware dynamic programming over visited history summaries.
///
/// Exploratory rollouts on the untruncated dynamics pick uniform actions; at
/// each visited history every action is simulated `mc_samples` times from
/// the latent state. At depth `n_cap` the maximization is restricted to
/// actions none of whose draws was censored; when no action qualifies,
/// `a_max` is the only choice. Values
/// of histories reached but never expanded fall back to the mean over
/// expanded histories with the same coarse key, then to the overall mean.
pub fn solve_censored_dp(env: &Environment, cfg: &DpConfig) -> Result<(ValueTable, PolicyArtifact)> {
    cfg.validate()?;
    let ecfg = env.config();
    let sim = Environment::new(ecfg.without_truncation())?;
    let env = &sim;
    let space = DiscretizedSpace::new(ecfg, cfg.ir_bins)?;
    let grid = ecfg.grid.clone();
    let n_actions = grid.len();
    let n_cap = cfg.n_cap;
    let y_cap = ecfg.y_cap;
    let d_max = ecfg.demand.d_max;
    let base = derive_seed(cfg.seed, 0xC0DE);
    let per_rollout: Vec<Vec<Sample>> = (0..cfg.rollouts)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(base, r as u64);
            let mut ep = Episode::start(env, n_cap + 2, &mut rng);
            let mut out = Vec::with_capacity(cfg.rollout_horizon * n_actions * cfg.mc_samples);
            for _ in 0..cfg.rollout_horizon {
                let key = history_key(&space, ep.window(), n_cap, y_cap, d_max);
                for a_idx in 0..n_actions {
                    let a = grid.action(a_idx);
                    for _ in 0..cfg.mc_samples {
                        let mut branch = ep.clone();
                        let step = branch.advance(a, &mut rng);
                        out.push(Sample {
                            key,
                            action: a_idx as u16,
                            censored: !step.delta,
                            reward: step.reward,
                            next: history_key(&space, branch.window(), n_cap, y_cap, d_max),
                        });
                    }
                }
                let a = grid.action(rng.random_range(0..n_actions));
                ep.advance(a, &mut rng);
            }
            out
        })
        .collect();

    let mut sources: Vec<HistoryKey> = per_rollout.iter().flatten().map(|s| s.key).collect();
    sources.sort_unstable();
    sources.dedup();
    let source_id: HashMap<HistoryKey, usize> =
        sources.iter().enumerate().map(|(i, k)| (*k, i)).collect();
    let mut leaves: Vec<HistoryKey> = per_rollout
        .iter()
        .flatten()
        .map(|s| s.next)
        .filter(|k| !source_id.contains_key(k))
        .collect();
    leaves.sort_unstable();
    leaves.dedup();
    let leaf_id: HashMap<HistoryKey, usize> =
        leaves.iter().enumerate().map(|(i, k)| (*k, i)).collect();
    let node_of = |k: &HistoryKey| -> usize {
        match source_id.get(k) {
            Some(&i) => i,
            None => sources.len() + leaf_id[k],
        }
    };

    // Aggregate draws per (source, action): mean reward and next-node counts.
    let n_src = sources.len();
    let mut reward_sum = vec![0.0; n_src * n_actions];
    let mut counts = vec![0u32; n_src * n_actions];
    let mut any_censored = vec![false; n_src * n_actions];
    let mut edges: Vec<HashMap<usize, u32>> = vec![HashMap::new(); n_src * n_actions];
    for s in per_rollout.iter().flatten() {
        let slot = source_id[&s.key] * n_actions + s.action as usize;
        reward_sum[slot] += s.reward;
        counts[slot] += 1;
        any_censored[slot] |= s.censored;
        *edges[slot].entry(node_of(&s.next)).or_insert(0) += 1;
    }
    drop(per_rollout);
    let edges: Vec<Vec<(usize, f64)>> = edges
        .into_iter()
        .zip(&counts)
        .map(|(m, &c)| {
            let mut v: Vec<(usize, f64)> = m.into_iter().map(|(n, k)| (n, k as f64 / c as f64)).collect();
            v.sort_by_key(|e| e.0);
            v
        })
        .collect();
    let mean_reward: Vec<f64> = reward_sum
        .iter()
        .zip(&counts)
        .map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
        .collect();

    // Coarse groups for leaf fallback.
    let mut coarse_members: HashMap<HistoryKey, Vec<usize>> = HashMap::new();
    for (i, k) in sources.iter().enumerate() {
        coarse_members.entry(k.coarse()).or_default().push(i);
    }
    let leaf_group: Vec<Option<HistoryKey>> = leaves
        .iter()
        .map(|k| coarse_members.contains_key(&k.coarse()).then(|| k.coarse()))
        .collect();

    let n_nodes = n_src + leaves.len();
    let mut v = vec![0.0; n_nodes];
    let mut policy = vec![0u16; n_src];
    let tol = 1e-3 * r_max_bound(ecfg);
    let mut tracker = Contraction::new(tol.max(1e-12));
    let a_max_idx = grid.index_of(&grid.a_max()).expect("a_max on grid");
    // Admissible actions per source: everything sampled, except at the
    // depth cap where only never-censored actions (or a_max) remain.
    let admissible: Vec<bool> = (0..n_src)
        .flat_map(|i| {
            let at_cap = sources[i].depth() >= n_cap;
            let slots = i * n_actions..(i + 1) * n_actions;
            let ok: Vec<bool> = slots
                .clone()
                .map(|s| counts[s] > 0 && !(at_cap && any_censored[s]))
                .collect();
            if ok.iter().any(|&b| b) {
                ok
            } else {
                (0..n_actions).map(|a| a == a_max_idx && counts[i * n_actions + a] > 0).collect()
            }
        })
        .collect();
    let backups = |v: &[f64], i: usize| -> Vec<f64> {
        (0..n_actions)
            .map(|a| {
                let slot = i * n_actions + a;
                if !admissible[slot] {
                    f64::NEG_INFINITY
                } else {
                    mean_reward[slot]
                        + cfg.gamma * edges[slot].iter().map(|&(n, p)| p * v[n]).sum::<f64>()
                }
            })
            .collect()
    };
    for sweep in 0..cfg.max_sweeps {
        let rows: Vec<(f64, u16)> = (0..n_src)
            .into_par_iter()
            .map(|i| {
                let q = backups(&v, i);
                if q.iter().all(|x| *x == f64::NEG_INFINITY) {
                    (0.0, a_max_idx as u16)
                } else {
                    let a = argmax_first(&q);
                    (q[a], a as u16)
                }
            })
            .collect();
        let mut delta: f64 = 0.0;
        for (i, (val, a)) in rows.into_iter().enumerate() {
            delta = delta.max((val - v[i]).abs());
            v[i] = val;
            policy[i] = a;
        }
        let overall = if n_src > 0 {
            v[..n_src].iter().sum::<f64>() / n_src as f64
        } else {
            0.0
        };
        let group_mean: HashMap<HistoryKey, f64> = coarse_members
            .iter()
            .map(|(k, m)| (*k, m.iter().map(|&i| v[i]).sum::<f64>() / m.len() as f64))
            .collect();
        for (l, g) in leaf_group.iter().enumerate() {
            let val = g.map(|g| group_mean[&g]).unwrap_or(overall);
            delta = delta.max((val - v[n_src + l]).abs());
            v[n_src + l] = val;
        }
        if tracker.record(delta)? {
            info!(
                "censored value iteration converged after {} sweeps over {} histories",
                sweep + 1,
                n_src
            );
            break;
        }
    }

    // Coarse fallback action: best mean backup across the group's members.
    let mut coarse_actions: Vec<(HistoryKey, u16)> = coarse_members
        .iter()
        .map(|(k, members)| {
            let mut acc = vec![0.0; n_actions];
            let mut seen = vec![0usize; n_actions];
            for &i in members {
                for (a, q) in backups(&v, i).into_iter().enumerate() {
                    if q.is_finite() {
                        acc[a] += q;
                        seen[a] += 1;
                    }
                }
            }
            let means: Vec<f64> = acc
                .iter()
                .zip(&seen)
                .map(|(s, &c)| if c > 0 { s / c as f64 } else { f64::NEG_INFINITY })
                .collect();
            (*k, argmax_first(&means) as u16)
        })
        .collect();
    coarse_actions.sort_unstable_by_key(|e| e.0);
    let mut votes = vec![0usize; n_actions];
    for &a in &policy {
        votes[a as usize] += 1;
    }
    let default_action = argmax_first(&votes.iter().map(|&c| c as f64).collect::<Vec<_>>()) as u16;
    let sweeps = tracker.deltas.len();
    let table = CensoredTable {
        n_cap,
        space,
        y_cap,
        d_max,
        actions: sources.iter().copied().zip(policy).collect(),
        coarse_actions,
        default_action,
    };
    info!(
        "censoring-aware table: {} expanded histories, {} leaves",
        n_src,
        leaves.len()
    );
    Ok((
        ValueTable {
            gamma: cfg.gamma,
            values: v[..n_src].to_vec(),
            deltas: tracker.deltas,
            sweeps,
            mc_samples: cfg.mc_samples,
            states: n_src,
        },
        PolicyArtifact::new(ecfg, n_cap, PolicyBody::Censored(table)),
    ))
}

/// Monte-Carlo estimate of a policy's discounted return.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub policy: String,
    /// Episodes in the training data (0 for reference policies).
    pub train_episodes: usize,
    pub eval_episodes: usize,
    pub horizon: usize,
    pub gamma: f64,
    pub seed: u64,
    pub env_fingerprint: String,
    pub mean_return: f64,
    pub sd: f64,
    pub ci_half: f64,
    /// Periods in which `a_max` was forced by the censoring-depth boundary.
    pub amax_events: usize,
    pub out_of_support: usize,
    /// `γ^H · R_max / (1 − γ)`: bias from truncating at the horizon.
    pub truncation_bound: f64,
    #[serde(skip)]
    pub returns: Vec<f64>,
}

/// Common-random-number evaluation on the untruncated dynamics: episode `e`
/// uses the same stream for every policy evaluated with the same seed.
pub fn evaluate_policy(
    policy: &dyn Policy,
    env: &Environment,
    n_episodes: usize,
    horizon: usize,
    gamma: f64,
    seed: u64,
) -> Result<EvalReport> {
    if n_episodes < 2 {
        return Err(Error::InvalidArgument("evaluation needs at least 2 episodes".into()));
    }
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be >= 1".into()));
    }
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::config("eval.gamma", "must lie in [0, 1)"));
    }
    let base = derive_seed(seed, 0xE7A1);
    let cap = policy.window_cap().max(1);
    let sim = Environment::new(env.config().without_truncation())?;
    let env = &sim;
    let rows: Vec<(f64, usize, usize)> = (0..n_episodes)
        .into_par_iter()
        .map(|e| {
            let mut rng = stream(base, e as u64);
            let mut ep = Episode::start(env, cap, &mut rng);
            let mut ret = 0.0;
            let mut disc = 1.0;
            let (mut amax, mut oos) = (0, 0);
            for _ in 0..horizon {
                let d = policy.decide(&ep, &mut rng);
                amax += d.boundary as usize;
                oos += d.out_of_support as usize;
                let out = ep.advance(d.action, &mut rng);
                ret += disc * out.reward;
                disc *= gamma;
            }
            (ret, amax, oos)
        })
        .collect();
    let returns: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let sd = (returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let cfg = env.config();
    Ok(EvalReport {
        policy: policy.name(),
        train_episodes: 0,
        eval_episodes: n_episodes,
        horizon,
        gamma,
        seed,
        env_fingerprint: cfg.fingerprint(),
        mean_return: mean,
        sd,
        ci_half: 1.96 * sd / n.sqrt(),
        amax_events: rows.iter().map(|r| r.1).sum(),
        out_of_support: rows.iter().map(|r| r.2).sum(),
        truncation_bound: gamma.powi(horizon as i32) * r_max_bound(cfg) / (1.0 - gamma),
        returns,
    })
}

/// Evaluates an artifact after checking it against the environment.
pub fn evaluate_artifact(
    artifact: &PolicyArtifact,
    env: &Environment,
    n_episodes: usize,
    horizon: usize,
    gamma: f64,
    seed: u64,
) -> Result<EvalReport> {
    artifact.check_compatible(env.config())?;
    evaluate_policy(artifact, env, n_episodes, horizon, gamma, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretRow {
    pub algo: String,
    pub n_episodes: usize,
    pub seed: u64,
    pub mean_return: f64,
    pub ci_half: f64,
    pub regret: f64,
    pub regret_ci_half: f64,
    pub amax_events: usize,
}

/// `reference − policy` per report. The CI uses paired differences when both
/// reports hold per-episode returns from the same evaluation streams, and
/// otherwise combines the two half-widths in quadrature.
pub fn regret_table(reports: &[EvalReport], reference: &EvalReport) -> Result<Vec<RegretRow>> {
    reports
        .iter()
        .map(|r| {
            if r.env_fingerprint != reference.env_fingerprint
                || r.horizon != reference.horizon
                || r.gamma != reference.gamma
            {
                return Err(Error::Incompatible(format!(
                    "report for {} was evaluated under a different environment, horizon or discount",
                    r.policy
                )));
            }
            let paired = r.seed == reference.seed
                && r.returns.len() == reference.returns.len()
                && r.returns.len() >= 2;
            let regret_ci_half = if paired {
                let diffs: Vec<f64> = reference
                    .returns
                    .iter()
                    .zip(&r.returns)
                    .map(|(a, b)| a - b)
                    .collect();
                let n = diffs.len() as f64;
                let m = diffs.iter().sum::<f64>() / n;
                let sd = (diffs.iter().map(|d| (d - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
                1.96 * sd / n.sqrt()
            } else {
                (r.ci_half.powi(2) + reference.ci_half.powi(2)).sqrt()
            };
            Ok(RegretRow {
                algo: r.policy.clone(),
                n_episodes: r.train_episodes,
                seed: r.seed,
                mean_return: r.mean_return,
                ci_half: r.ci_half,
                regret: reference.mean_return - r.mean_return,
                regret_ci_half,
                amax_events: r.amax_events,
            })
        })
        .collect()
}
