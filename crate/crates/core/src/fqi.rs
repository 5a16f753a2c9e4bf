//! Censored fitted Q-iteration (C-FQI) and its pessimistic variant (PC-FQI).
//!
//! Transitions are split by the number of censored periods preceding them.
//! Depth `i` regresses onto
//! `r* + γ·[Δ=1]·max_a Q⁰(W', a) + γ·[Δ=0]·max_a Q^{i+1}(block ⊕ (A, W'), a)`;
//! the pessimistic variant backs up `Q − U` instead of `Q`.

use std::fs;
use std::path::Path;

use log::{debug, info};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::approx::{
    design_matrix, krr_select, FeatureLayout, FeatureMap, FeatureScales, KernelRidgeModel,
    KrrGrid, Regressor, RidgeSolver,
};
use crate::censor::{default_window_k, estimate_n_hat, partition, BucketRecord, DepthPartition};
use crate::data::{Decision, Policy};
use crate::env::{Action, ActionGrid, EnvConfig, Episode};
use crate::error::{Error, Result};
use crate::history::HistoryBlock;
use crate::oracle::{CensoredTable, OracleTable};
use crate::rng::derive_seed;
use crate::survival::{r_max_bound, AugmentedDataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FqiMode {
    Cfqi,
    Pcfqi,
    /// Pessimistic backups for the first `switch_point` iterations, then
    /// plain ones.
    Fusion,
}

impl FqiMode {
    pub fn name(&self) -> &'static str {
        match self {
            FqiMode::Cfqi => "cfqi",
            FqiMode::Pcfqi => "pcfqi",
            FqiMode::Fusion => "fusion",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "cfqi" => Some(FqiMode::Cfqi),
            "pcfqi" => Some(FqiMode::Pcfqi),
            "fusion" => Some(FqiMode::Fusion),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionClass {
    Ridge,
    Krr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FqiConfig {
    pub iterations: usize,
    pub gamma: f64,
    pub function_class: FunctionClass,
    /// Width multiplier of the uncertainty quantifier.
    pub beta: f64,
    pub lambda: f64,
    pub switch_point: usize,
    pub layout: FeatureLayout,
    pub krr: KrrGrid,
    /// Window for the depth estimate; `None` uses the default schedule.
    pub window_k: Option<usize>,
}

impl Default for FqiConfig {
    fn default() -> Self {
        FqiConfig {
            iterations: 10,
            gamma: 0.9,
            function_class: FunctionClass::Ridge,
            beta: 1.0,
            lambda: 1.0,
            switch_point: 4,
            layout: FeatureLayout::Multilinear,
            krr: KrrGrid::default(),
            window_k: None,
        }
    }
}

impl FqiConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::config("algo.iterations", "must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::config("algo.gamma", "must lie in [0, 1)"));
        }
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(Error::config("algo.beta", "must be finite and >= 0"));
        }
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::config("algo.lambda", "must be finite and > 0"));
        }
        if self.window_k == Some(0) {
            return Err(Error::config("algo.window_k", "must be >= 1"));
        }
        if self.function_class == FunctionClass::Krr {
            self.krr.validate()?;
        }
        Ok(())
    }

    fn pessimistic_at(&self, mode: FqiMode, k: usize) -> bool {
        match mode {
            FqiMode::Cfqi => false,
            FqiMode::Pcfqi => true,
            FqiMode::Fusion => k < self.switch_point,
        }
    }
}

/// Fitted `Q^{(0)}, …, Q^{(n̂)}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QEnsemble {
    pub mode: FqiMode,
    pub gamma: f64,
    pub iterations: usize,
    pub layout: FeatureLayout,
    pub scales: FeatureScales,
    pub models: Vec<Regressor>,
    pub beta: f64,
    /// Predictions are clipped to `±v_max`.
    pub v_max: f64,
}

impl QEnsemble {
    pub fn feature_map(&self, depth: usize) -> FeatureMap {
        FeatureMap::new(self.layout, depth, self.scales.clone())
    }

    /// Clipped `Q̂^{(i)}(block, a)` for every grid action; with `pessimism`
    /// the uncertainty times `beta` is subtracted.
    pub fn q_values(&self, block: &HistoryBlock, grid: &ActionGrid, pessimism: bool) -> Result<Vec<f64>> {
        let depth = block.depth();
        let model = self.models.get(depth).ok_or(Error::DepthMismatch {
            expected: self.models.len().saturating_sub(1),
            found: depth,
        })?;
        let map = self.feature_map(depth);
        let mut phi = Vec::with_capacity(map.dim());
        let mut out = Vec::with_capacity(grid.len());
        for a in grid.iter() {
            map.featurize_into(block, &a, &mut phi)?;
            let mut q = model.predict(&phi).clamp(-self.v_max, self.v_max);
            if pessimism {
                let u = model.uncertainty(self.beta, &phi).unwrap_or(0.0);
                q = (q - u).max(-self.v_max);
            }
            out.push(q);
        }
        Ok(out)
    }
}

/// Index of the largest value; the first one wins ties.
pub fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Backed-up value `max_a (Q(a) − U(a))`, each term clipped to `[−v_max, v_max]`.
pub fn backup_value(q: &[f64], u: Option<&[f64]>, v_max: f64) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for (k, &qk) in q.iter().enumerate() {
        let mut v = qk.clamp(-v_max, v_max);
        if let Some(u) = u {
            v = (v - u[k]).max(-v_max);
        }
        best = best.max(v);
    }
    best
}

/// Regression target of one record.
pub fn target(r_star: f64, gamma: f64, backup: f64) -> f64 {
    r_star + gamma * backup
}

const ARTIFACT_VERSION: u32 = 1;
pub const TIE_BREAK: &str = "lowest_price_then_lowest_order";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyBody {
    /// Greedy in `Q̂ − act_beta·U` below depth `n̂`.
    Fitted { ensemble: QEnsemble, act_beta: f64 },
    /// Censoring-aware dynamic-programming policy over observed histories.
    Censored(CensoredTable),
    /// Full-information policy; reads the latent state.
    Oracle(OracleTable),
}

/// A deployable policy with the metadata needed to check it against an
/// environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyArtifact {
    pub version: u32,
    pub env_fingerprint: String,
    pub grid: ActionGrid,
    pub x_dim: usize,
    pub y_cap: f64,
    pub d_max: f64,
    pub a_max: Action,
    pub n_hat: usize,
    pub tie_break: String,
    pub body: PolicyBody,
}

impl PolicyArtifact {
    pub fn new(env: &EnvConfig, n_hat: usize, body: PolicyBody) -> Self {
        PolicyArtifact {
            version: ARTIFACT_VERSION,
            env_fingerprint: env.fingerprint(),
            grid: env.grid.clone(),
            x_dim: env.features.dim(),
            y_cap: env.y_cap,
            d_max: env.demand.d_max,
            a_max: env.grid.a_max(),
            n_hat,
            tie_break: TIE_BREAK.into(),
            body,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match &self.body {
            PolicyBody::Fitted { ensemble, .. } => ensemble.mode.name(),
            PolicyBody::Censored(_) => "censored_dp",
            PolicyBody::Oracle(_) => "oracle_dp",
        }
    }

    /// Refuses environments with a different action grid or observation
    /// layout.
    pub fn check_compatible(&self, env: &EnvConfig) -> Result<()> {
        if self.version != ARTIFACT_VERSION {
            return Err(Error::Incompatible(format!(
                "artifact version {} (expected {ARTIFACT_VERSION})",
                self.version
            )));
        }
        if self.grid != env.grid {
            return Err(Error::Incompatible("action grid differs from the environment".into()));
        }
        if self.x_dim != env.features.dim() {
            return Err(Error::Incompatible(format!(
                "artifact expects {} covariates, environment has {}",
                self.x_dim,
                env.features.dim()
            )));
        }
        if self.y_cap != env.y_cap || self.d_max != env.demand.d_max {
            return Err(Error::Incompatible("inventory or demand scale differs".into()));
        }
        Ok(())
    }

    pub fn window_cap(&self) -> usize {
        match &self.body {
            PolicyBody::Oracle(_) => 1,
            PolicyBody::Censored(t) => t.n_cap + 2,
            PolicyBody::Fitted { .. } => self.n_hat + 2,
        }
    }

    pub fn act(&self, episode: &Episode<'_>) -> Decision {
        match &self.body {
            PolicyBody::Oracle(table) => Decision::plain(table.act(episode)),
            PolicyBody::Censored(table) => table.act(episode.window(), &self.grid),
            PolicyBody::Fitted { ensemble, act_beta } => {
                let window = episode.window();
                let depth = window.censoring_depth();
                if depth > self.n_hat {
                    debug!("censoring depth {depth} exceeds n_hat {}; playing a_max", self.n_hat);
                    return Decision {
                        action: self.a_max,
                        boundary: true,
                        out_of_support: true,
                    };
                }
                if depth == self.n_hat && self.n_hat > 0 {
                    return Decision {
                        action: self.a_max,
                        boundary: true,
                        out_of_support: false,
                    };
                }
                let block = window.block(depth).expect("window holds n_hat + 1 steps");
                let q = ensemble
                    .q_values(&block, &self.grid, *act_beta > 0.0)
                    .expect("block depth matches the ensemble");
                Decision::plain(self.grid.action(argmax_first(&q)))
            }
        }
    }

    /// SHA-256 of the serialized artifact.
    pub fn summary_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("artifact serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

impl Policy for PolicyArtifact {
    fn name(&self) -> String {
        self.kind_name().into()
    }

    fn window_cap(&self) -> usize {
        PolicyArtifact::window_cap(self)
    }

    fn decide(&self, episode: &Episode<'_>, _rng: &mut dyn rand::RngCore) -> Decision {
        self.act(episode)
    }
}

pub fn save_policy(artifact: &PolicyArtifact, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string(artifact).map_err(|e| Error::Numerical(e.to_string()))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_policy(path: impl AsRef<Path>) -> Result<PolicyArtifact> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let artifact: PolicyArtifact = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        reason: e.to_string(),
    })?;
    if artifact.version != ARTIFACT_VERSION {
        return Err(Error::Incompatible(format!(
            "artifact version {} (expected {ARTIFACT_VERSION})",
            artifact.version
        )));
    }
    Ok(artifact)
}

/// Loads an artifact and checks it against the environment it will act in.
pub fn load_policy_for(path: impl AsRef<Path>, env: &EnvConfig) -> Result<PolicyArtifact> {
    let artifact = load_policy(path)?;
    artifact.check_compatible(env)?;
    Ok(artifact)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub mode: FqiMode,
    pub n_hat: usize,
    pub window_k: usize,
    pub bucket_sizes: Vec<usize>,
    pub discarded: usize,
    pub feature_dims: Vec<usize>,
    pub iterations: usize,
    /// Backed-up predictions that hit the `±R_max/(1−γ)` envelope.
    pub clip_events: usize,
}

/// Candidate next-step features of every record, grouped by the depth of
/// the model that evaluates them.
struct NextTable {
    /// Row-major blocks of `|A|` rows per referencing record.
    features: DMatrix<f64>,
    /// `β·sqrt(ψᵀΛ⁻¹ψ)` per row, filled when pessimism is used.
    uncertainty: Vec<f64>,
}

/// Fixed quantities of one training run.
pub struct FqiProblem {
    cfg: FqiConfig,
    mode: FqiMode,
    grid: ActionGrid,
    maps: Vec<FeatureMap>,
    r_star: Vec<Vec<f64>>,
    designs: Vec<Vec<Vec<f64>>>,
    ridge: Vec<Option<RidgeSolver>>,
    krr_params: Vec<Option<(crate::approx::Kernel, f64)>>,
    /// For each bucket record: `(target depth, first row in that table)`.
    links: Vec<Vec<(usize, usize)>>,
    next: Vec<NextTable>,
    v_max: f64,
    seed: u64,
}

impl FqiProblem {
    pub fn new(
        part: &DepthPartition,
        env: &EnvConfig,
        cfg: &FqiConfig,
        mode: FqiMode,
        seed: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        let n_hat = part.n_hat;
        for (depth, bucket) in part.buckets.iter().enumerate() {
            if bucket.is_empty() {
                return Err(Error::EmptyBucket { depth, n_hat });
            }
        }
        let scales = FeatureScales::from_env(env);
        let maps: Vec<FeatureMap> = (0..=n_hat)
            .map(|i| FeatureMap::new(cfg.layout, i, scales.clone()))
            .collect();
        let grid = env.grid.clone();
        let n_actions = grid.len();

        let designs: Vec<Vec<Vec<f64>>> = part
            .buckets
            .iter()
            .enumerate()
            .map(|(i, bucket)| {
                bucket
                    .iter()
                    .map(|rec| maps[i].featurize(&rec.block, &rec.action))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        let r_star = part
            .buckets
            .iter()
            .map(|b| b.iter().map(|r| r.r_star).collect())
            .collect();

        let next_block = |i: usize, rec: &BucketRecord| -> (usize, HistoryBlock) {
            if rec.delta {
                (0, HistoryBlock::single(rec.w_next.clone()))
            } else {
                (i + 1, rec.extended())
            }
        };
        let mut rows_per_depth = vec![0usize; n_hat + 1];
        let mut links = Vec::with_capacity(n_hat + 1);
        for (i, bucket) in part.buckets.iter().enumerate() {
            let mut l = Vec::with_capacity(bucket.len());
            for rec in bucket {
                let j = if rec.delta { 0 } else { i + 1 };
                if j > n_hat {
                    return Err(Error::InconsistentDepth {
                        traj: 0,
                        t: rec.index,
                        run: j,
                        n_hat,
                    });
                }
                l.push((j, rows_per_depth[j]));
                rows_per_depth[j] += n_actions;
            }
            links.push(l);
        }
        let mut data: Vec<Vec<f64>> = rows_per_depth
            .iter()
            .enumerate()
            .map(|(j, &rows)| Vec::with_capacity(rows * maps[j].dim()))
            .collect();
        let mut phi = Vec::new();
        for (i, bucket) in part.buckets.iter().enumerate() {
            for rec in bucket {
                let (j, block) = next_block(i, rec);
                for a in grid.iter() {
                    maps[j].featurize_into(&block, &a, &mut phi)?;
                    data[j].extend_from_slice(&phi);
                }
            }
        }
        let next: Vec<NextTable> = data
            .into_iter()
            .enumerate()
            .map(|(j, d)| NextTable {
                features: DMatrix::from_row_slice(rows_per_depth[j], maps[j].dim(), &d),
                uncertainty: Vec::new(),
            })
            .collect();

        let mut problem = FqiProblem {
            cfg: cfg.clone(),
            mode,
            grid,
            maps,
            r_star,
            designs,
            ridge: vec![],
            krr_params: vec![None; n_hat + 1],
            links,
            next,
            v_max: r_max_bound(env) / (1.0 - cfg.gamma),
            seed,
        };
        if cfg.function_class == FunctionClass::Ridge {
            problem.ridge = problem
                .designs
                .par_iter()
                .map(|rows| RidgeSolver::new(design_matrix(rows)?, cfg.lambda).map(Some))
                .collect::<Result<_>>()?;
        } else {
            problem.ridge = vec![None; n_hat + 1];
        }
        Ok(problem)
    }

    pub fn v_max(&self) -> f64 {
        self.v_max
    }

    pub fn n_hat(&self) -> usize {
        self.maps.len() - 1
    }

    fn uses_pessimism(&self) -> bool {
        (0..self.cfg.iterations).any(|k| self.cfg.pessimistic_at(self.mode, k))
    }

    /// Per-row uncertainty of the next-step tables. Depends only on the
    /// design (and, for kernels, the selected hyperparameters).
    fn fill_uncertainty(&mut self, models: &[Regressor]) {
        let beta = self.cfg.beta;
        for (j, table) in self.next.iter_mut().enumerate() {
            let n = table.features.nrows();
            let d = table.features.ncols();
            table.uncertainty = match &self.ridge[j] {
                Some(solver) => {
                    let m = solver.solve(&vec![0.0; solver.design().nrows()]).expect("solver");
                    (0..n)
                        .into_par_iter()
                        .map(|r| {
                            let row: Vec<f64> = (0..d).map(|c| table.features[(r, c)]).collect();
                            m.uncertainty(beta, &row)
                        })
                        .collect()
                }
                None => (0..n)
                    .into_par_iter()
                    .map(|r| {
                        let row: Vec<f64> = (0..d).map(|c| table.features[(r, c)]).collect();
                        models[j].uncertainty(beta, &row).unwrap_or(0.0)
                    })
                    .collect(),
            };
        }
    }

    /// Regression targets for every bucket given the previous iterate.
    /// Returns the targets and the number of clipped predictions.
    pub fn build_targets(&self, models: &[Regressor], pessimistic: bool) -> (Vec<Vec<f64>>, usize) {
        let n_actions = self.grid.len();
        let mut clips = 0;
        let preds: Vec<Option<Vec<f64>>> = self
            .next
            .iter()
            .zip(models)
            .map(|(table, model)| match model {
                Regressor::Zero => None,
                Regressor::Ridge(m) => {
                    let theta = DVector::from_column_slice(&m.theta);
                    Some((&table.features * theta).iter().copied().collect())
                }
                Regressor::Krr(m) => {
                    let d = table.features.ncols();
                    Some(
                        (0..table.features.nrows())
                            .into_par_iter()
                            .map(|r| {
                                let row: Vec<f64> =
                                    (0..d).map(|c| table.features[(r, c)]).collect();
                                m.predict(&row)
                            })
                            .collect(),
                    )
                }
            })
            .collect();
        for p in preds.iter().flatten() {
            clips += p.iter().filter(|v| v.abs() > self.v_max).count();
        }
        let targets = self
            .links
            .iter()
            .zip(&self.r_star)
            .map(|(links, rs)| {
                links
                    .iter()
                    .zip(rs)
                    .map(|(&(j, row), &r)| {
                        let backup = match &preds[j] {
                            None => 0.0,
                            Some(p) => {
                                let q = &p[row..row + n_actions];
                                let u = (pessimistic && !self.next[j].uncertainty.is_empty())
                                    .then(|| &self.next[j].uncertainty[row..row + n_actions]);
                                backup_value(q, u, self.v_max)
                            }
                        };
                        target(r, self.cfg.gamma, backup)
                    })
                    .collect()
            })
            .collect();
        (targets, clips)
    }

    fn fit(&mut self, targets: &[Vec<f64>]) -> Result<Vec<Regressor>> {
        match self.cfg.function_class {
            FunctionClass::Ridge => self
                .ridge
                .par_iter()
                .zip(targets)
                .map(|(solver, t)| {
                    Ok(Regressor::Ridge(solver.as_ref().expect("ridge solver").solve(t)?))
                })
                .collect(),
            FunctionClass::Krr => {
                for (i, params) in self.krr_params.iter_mut().enumerate() {
                    if params.is_none() {
                        let rows = &self.designs[i];
                        let chosen = if rows.len() >= self.cfg.krr.folds {
                            let (k, l, _) = krr_select(
                                rows,
                                &targets[i],
                                &self.cfg.krr,
                                derive_seed(self.seed, i as u64),
                            )?;
                            (k, l)
                        } else {
                            let l = self.cfg.krr.lambdas.iter().copied().fold(f64::INFINITY, f64::min);
                            (self.cfg.krr.kernels[0], l)
                        };
                        *params = Some(chosen);
                    }
                }
                self.designs
                    .iter()
                    .zip(targets)
                    .zip(&self.krr_params)
                    .map(|((rows, t), p)| {
                        let (k, l) = p.expect("selected");
                        let mut m = KernelRidgeModel::fit(k, l, rows, t)?;
                        m.cv_folds = self.cfg.krr.folds;
                        Ok(Regressor::Krr(m))
                    })
                    .collect()
            }
        }
    }
}

/// Runs C-FQI / PC-FQI / fusion on an augmented dataset.
pub fn run_fqi(
    aug: &AugmentedDataset,
    cfg: &FqiConfig,
    mode: FqiMode,
    seed: u64,
) -> Result<(PolicyArtifact, TrainReport)> {
    cfg.validate()?;
    let ds = &aug.data;
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let env = &ds.meta.env;
    let window_k = cfg
        .window_k
        .unwrap_or_else(|| default_window_k(ds.n_traj, ds.horizon, cfg.gamma))
        .min(ds.horizon);
    let n_hat = estimate_n_hat(ds, window_k)?;
    let part = partition(aug, n_hat)?;
    info!(
        "n_hat = {n_hat} (window {window_k}); bucket sizes {:?}",
        part.sizes()
    );
    let mut problem = FqiProblem::new(&part, env, cfg, mode, seed)?;
    let mut models = vec![Regressor::Zero; n_hat + 1];
    let mut clip_events = 0;
    let pessimism = problem.uses_pessimism();
    for k in 0..cfg.iterations {
        let pess = cfg.pessimistic_at(mode, k);
        let (targets, clips) = problem.build_targets(&models, pess);
        clip_events += clips;
        models = problem.fit(&targets)?;
        if k == 0 && pessimism {
            problem.fill_uncertainty(&models);
        }
    }
    let ensemble = QEnsemble {
        mode,
        gamma: cfg.gamma,
        iterations: cfg.iterations,
        layout: cfg.layout,
        scales: FeatureScales::from_env(env),
        models,
        beta: cfg.beta,
        v_max: problem.v_max(),
    };
    let act_beta = if mode == FqiMode::Pcfqi { cfg.beta } else { 0.0 };
    let report = TrainReport {
        mode,
        n_hat,
        window_k,
        bucket_sizes: part.sizes(),
        discarded: part.discarded,
        feature_dims: problem.maps.iter().map(FeatureMap::dim).collect(),
        iterations: cfg.iterations,
        clip_events,
    };
    let artifact = PolicyArtifact::new(env, n_hat, PolicyBody::Fitted { ensemble, act_beta });
    Ok((artifact, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn target_arithmetic() {
        assert_eq!(target(2.0, 0.5, backup_value(&[1.0, 4.0], None, 100.0)), 4.0);
        let u = [1.0, 1.0];
        assert_eq!(target(2.0, 0.5, backup_value(&[4.0, 4.0], Some(&u), 100.0)), 3.5);
        assert_eq!(backup_value(&[0.0; 3], None, 10.0), 0.0);
        assert_eq!(backup_value(&[-50.0], Some(&[5.0]), 10.0), -10.0);
        assert_eq!(backup_value(&[50.0], None, 10.0), 10.0);
    }

    #[test]
    fn argmax_ties_go_first() {
        assert_eq!(argmax_first(&[1.0, 3.0]), 1);
        assert_eq!(argmax_first(&[2.0, 2.0, 1.0]), 0);
    }

    #[test]
    fn config_validation() {
        let mut c = FqiConfig::default();
        c.gamma = 1.2;
        assert!(matches!(c.validate(), Err(Error::Config { path, .. }) if path == "algo.gamma"));
        let c = FqiConfig {
            iterations: 0,
            ..FqiConfig::default()
        };
        assert!(c.validate().is_err());
    }
}
