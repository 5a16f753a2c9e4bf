//! Conditional survival estimation and surrogate rewards for censored
//! periods.
//!
//! When `Δ_t = 0` the stockout penalty `c1·(D_t − Y_t)` is unobserved. It is
//! replaced by `c1·(E[D_t | D_t > Y_t, ·] − Y_t)` with the conditional tail
//! mean computed from a Kaplan–Meier curve:
//! `E[D | D > y] = y + ∫_y^{d_max} S(c) / S(y) dc`.

use std::collections::BTreeMap;
use std::path::Path;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{read_records, write_records, ObservedTransition, OfflineDataset};
use crate::env::{CostParams, EnvConfig, FeatureProcess};
use crate::error::{Error, Result};

/// Survival values at or below this are treated as an empty tail.
pub const SF_FLOOR: f64 = 1e-6;

/// Right-continuous step survival function `c ↦ P(D > c)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalCurve {
    /// `(time, S(time))` at each event time, increasing in time.
    jumps: Vec<(f64, f64)>,
    /// Largest observed time (event or censoring).
    max_time: f64,
    events: f64,
}

impl SurvivalCurve {
    /// Product-limit estimate from `(time, event)` pairs. A censored pair
    /// means the true value exceeds `time`.
    pub fn kaplan_meier(obs: &[(f64, bool)]) -> Self {
        let weighted: Vec<(f64, bool, f64)> = obs.iter().map(|&(t, e)| (t, e, 1.0)).collect();
        Self::kaplan_meier_weighted(&weighted)
    }

    /// Weighted product-limit estimate from `(time, event, weight)`.
    pub fn kaplan_meier_weighted(obs: &[(f64, bool, f64)]) -> Self {
        let mut sorted: Vec<(f64, bool, f64)> =
            obs.iter().copied().filter(|o| o.2 > 0.0).collect();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        Self::from_sorted(&sorted)
    }

    fn from_sorted(sorted: &[(f64, bool, f64)]) -> Self {
        let mut at_risk: f64 = sorted.iter().map(|o| o.2).sum();
        let mut s = 1.0;
        let mut jumps = Vec::new();
        let mut events_total = 0.0;
        let mut i = 0;
        while i < sorted.len() {
            let t = sorted[i].0;
            let mut events = 0.0;
            let mut leaving = 0.0;
            while i < sorted.len() && sorted[i].0 == t {
                if sorted[i].1 {
                    events += sorted[i].2;
                }
                leaving += sorted[i].2;
                i += 1;
            }
            if events > 0.0 && at_risk > 0.0 {
                s *= (1.0 - events / at_risk).max(0.0);
                jumps.push((t, s));
                events_total += events;
            }
            at_risk -= leaving;
        }
        SurvivalCurve {
            jumps,
            max_time: sorted.last().map(|o| o.0).unwrap_or(f64::NEG_INFINITY),
            events: events_total,
        }
    }

    /// Survival function of a discrete law given by support points and
    /// probabilities.
    pub fn from_distribution(points: &[f64], probs: &[f64]) -> Self {
        let mut pairs: Vec<(f64, f64)> = points.iter().copied().zip(probs.iter().copied()).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        let mut s = 1.0;
        let mut jumps = Vec::new();
        for &(t, p) in &pairs {
            if p > 0.0 {
                s = (s - p / total).max(0.0);
                jumps.push((t, s));
            }
        }
        SurvivalCurve {
            jumps,
            max_time: pairs.last().map(|p| p.0).unwrap_or(f64::NEG_INFINITY),
            events: total,
        }
    }

    pub fn has_events(&self) -> bool {
        self.events > 0.0
    }

    pub fn max_time(&self) -> f64 {
        self.max_time
    }

    fn value_at(&self, c: f64) -> f64 {
        let k = self.jumps.partition_point(|j| j.0 <= c);
        if k == 0 {
            1.0
        } else {
            self.jumps[k - 1].1
        }
    }

    /// `S(c)`; `None` beyond the last observation when the risk set has
    /// emptied with mass remaining.
    pub fn survival(&self, c: f64) -> Option<f64> {
        let s = self.value_at(c);
        if c > self.max_time && s > 0.0 {
            None
        } else {
            Some(s)
        }
    }

    /// `y + ∫_y^{d_max} S(c)/S(y) dc`, exact on the step function. Mass left
    /// after the last observation is held flat up to `d_max`.
    pub fn conditional_mean(&self, y: f64, d_max: f64) -> Result<f64> {
        if y >= d_max {
            return Ok(d_max);
        }
        let s_y = self.value_at(y);
        if self.max_time <= y || s_y <= SF_FLOOR {
            return Err(Error::DegenerateTail { y, sf: s_y });
        }
        let mut integral = 0.0;
        let mut left = y;
        let mut level = s_y;
        let start = self.jumps.partition_point(|j| j.0 <= y);
        for &(t, s) in &self.jumps[start..] {
            if t >= d_max {
                break;
            }
            integral += level * (t - left);
            left = t;
            level = s;
        }
        integral += level * (d_max - left);
        Ok((y + integral / s_y).clamp(y, d_max))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurvivalKind {
    KmGlobal,
    KmStratified,
    BeranKernel,
}

/// Which covariates the survival estimate conditions on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConditioningSpec {
    pub kind: SurvivalKind,
    /// Also condition on `Δ_{t−1}` and the binned lagged sales.
    pub use_history: bool,
    pub z_prev_bins: usize,
    /// Multiplier on the rule-of-thumb kernel bandwidth.
    pub bandwidth_scale: f64,
}

impl ConditioningSpec {
    pub fn validate(&self) -> Result<()> {
        if self.use_history && self.z_prev_bins == 0 {
            return Err(Error::config("impute.z_prev_bins", "must be >= 1"));
        }
        if !(self.bandwidth_scale > 0.0) || !self.bandwidth_scale.is_finite() {
            return Err(Error::config("impute.bandwidth_scale", "must be finite and > 0"));
        }
        Ok(())
    }
}

impl Default for ConditioningSpec {
    fn default() -> Self {
        ConditioningSpec {
            kind: SurvivalKind::KmStratified,
            use_history: false,
            z_prev_bins: 5,
            bandwidth_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
struct StratumKey {
    price: usize,
    econ: u8,
    history: Option<(bool, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Stratum {
    curve: SurvivalCurve,
    /// Sorted `(time, event)` with kernel covariates, for weighted refits.
    points: Vec<(f64, bool)>,
    covariates: Vec<Vec<f64>>,
    bandwidths: Vec<f64>,
}

/// Which estimate an imputation ended up using.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fallback {
    Conditional,
    Global,
    Midpoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalModel {
    spec: ConditioningSpec,
    d_max: f64,
    prices: Vec<f64>,
    econ_index: Option<usize>,
    kernel_index: Vec<usize>,
    global: SurvivalCurve,
    strata: BTreeMap<StratumKey, Stratum>,
}

fn sd(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = values.clone().count() as f64;
    if n < 2.0 {
        return 0.0;
    }
    let mean = values.clone().sum::<f64>() / n;
    (values.map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

impl SurvivalModel {
    fn key(&self, w_x: &[f64], z_prev: f64, delta_prev: bool, p: f64) -> StratumKey {
        if self.spec.kind == SurvivalKind::KmGlobal {
            return StratumKey {
                price: 0,
                econ: 0,
                history: None,
            };
        }
        let price = self
            .prices
            .iter()
            .position(|&v| v == p)
            .unwrap_or_else(|| nearest(&self.prices, p));
        let econ = self
            .econ_index
            .and_then(|i| w_x.get(i))
            .map(|v| (v.round() as i64).clamp(0, 255) as u8)
            .unwrap_or(0);
        let history = self.spec.use_history.then(|| {
            let bins = self.spec.z_prev_bins.max(1);
            let b = ((z_prev / self.d_max) * bins as f64).floor() as isize;
            (delta_prev, b.clamp(0, bins as isize - 1) as usize)
        });
        StratumKey {
            price,
            econ,
            history,
        }
    }

    fn kernel_covariates(&self, x: &[f64], z_prev: f64) -> Vec<f64> {
        let mut v: Vec<f64> = self.kernel_index.iter().map(|&i| x[i]).collect();
        if self.spec.use_history {
            v.push(z_prev);
        }
        v
    }

    pub fn spec(&self) -> &ConditioningSpec {
        &self.spec
    }

    pub fn global(&self) -> &SurvivalCurve {
        &self.global
    }

    /// Conditional survival curve for the cell of a transition; `None` when
    /// the cell is unusable (absent or without events).
    pub fn curve_for(&self, tr: &ObservedTransition) -> Option<SurvivalCurve> {
        let key = self.key(&tr.w.x, tr.w.z_prev, tr.w.delta_prev, tr.a.p);
        let stratum = self.strata.get(&key)?;
        if !stratum.curve.has_events() {
            return None;
        }
        if self.spec.kind != SurvivalKind::BeranKernel || stratum.bandwidths.is_empty() {
            return Some(stratum.curve.clone());
        }
        let q = self.kernel_covariates(&tr.w.x, tr.w.z_prev);
        let weighted: Vec<(f64, bool, f64)> = stratum
            .points
            .iter()
            .zip(&stratum.covariates)
            .map(|(&(t, e), cov)| {
                let d2: f64 = cov
                    .iter()
                    .zip(&q)
                    .zip(&stratum.bandwidths)
                    .map(|((a, b), h)| ((a - b) / h).powi(2))
                    .sum();
                (t, e, (-0.5 * d2).exp())
            })
            .collect();
        let curve = SurvivalCurve::from_sorted(&weighted);
        curve.has_events().then_some(curve)
    }

    /// `E[D | D > y, ·]` from the transition's cell, without fallbacks.
    pub fn conditional_mean_censored(&self, y: f64, tr: &ObservedTransition) -> Result<f64> {
        match self.curve_for(tr) {
            Some(curve) => curve.conditional_mean(y, self.d_max),
            None => Err(Error::DegenerateTail {
                y,
                sf: 0.0,
            }),
        }
    }
}

fn nearest(grid: &[f64], v: f64) -> usize {
    grid.iter()
        .enumerate()
        .min_by(|a, b| (a.1 - v).abs().total_cmp(&(b.1 - v).abs()))
        .map(|(i, _)| i)
        .unwrap_or(0)
}

/// Fits the survival model on `(Z_t, Δ_t)` pairs of a dataset.
pub fn fit_survival(ds: &OfflineDataset, spec: &ConditioningSpec) -> Result<SurvivalModel> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    spec.validate()?;
    let env = &ds.meta.env;
    let (econ_index, kernel_index) = match env.features {
        FeatureProcess::None => (None, vec![]),
        FeatureProcess::RateEconomy { .. } => (Some(1), vec![0]),
    };
    let pairs: Vec<(f64, bool)> = ds.transitions.iter().map(|tr| (tr.z, tr.delta)).collect();
    let mut model = SurvivalModel {
        spec: spec.clone(),
        d_max: env.demand.d_max,
        prices: env.grid.prices.clone(),
        econ_index,
        kernel_index,
        global: SurvivalCurve::kaplan_meier(&pairs),
        strata: BTreeMap::new(),
    };
    if spec.kind == SurvivalKind::KmGlobal {
        return Ok(model);
    }
    let mut grouped: BTreeMap<StratumKey, Vec<(f64, bool, Vec<f64>)>> = BTreeMap::new();
    for tr in &ds.transitions {
        let key = model.key(&tr.w.x, tr.w.z_prev, tr.w.delta_prev, tr.a.p);
        let cov = model.kernel_covariates(&tr.w.x, tr.w.z_prev);
        grouped.entry(key).or_default().push((tr.z, tr.delta, cov));
    }
    for (key, mut rows) in grouped {
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        let points: Vec<(f64, bool)> = rows.iter().map(|r| (r.0, r.1)).collect();
        let curve = SurvivalCurve::kaplan_meier(&points);
        let (covariates, bandwidths) = if spec.kind == SurvivalKind::BeranKernel {
            let dims = rows.first().map(|r| r.2.len()).unwrap_or(0);
            let n = rows.len() as f64;
            let bw = (0..dims)
                .map(|d| {
                    let s = sd(rows.iter().map(move |r| r.2[d]));
                    let s = if s > 0.0 { s } else { 1.0 };
                    spec.bandwidth_scale * 1.06 * s * n.powf(-0.2)
                })
                .collect();
            (rows.into_iter().map(|r| r.2).collect(), bw)
        } else {
            (vec![], vec![])
        };
        model.strata.insert(
            key,
            Stratum {
                curve,
                points,
                covariates,
                bandwidths,
            },
        );
    }
    Ok(model)
}

/// Source of `E[D_t | D_t > Y_t, ·]` for censored transitions.
pub trait CensoredMean: Sync {
    fn censored_mean(&self, tr: &ObservedTransition) -> (f64, Fallback);
}

impl CensoredMean for SurvivalModel {
    /// Cell estimate, then the pooled curve, then `(y + d_max) / 2`.
    fn censored_mean(&self, tr: &ObservedTransition) -> (f64, Fallback) {
        let y = tr.w.y;
        if let Ok(m) = self.conditional_mean_censored(y, tr) {
            return (m, Fallback::Conditional);
        }
        if let Ok(m) = self.global.conditional_mean(y, self.d_max) {
            return (m, Fallback::Global);
        }
        ((y + self.d_max) / 2.0, Fallback::Midpoint)
    }
}

/// Surrogate reward of a censored period given the imputed demand mean.
pub fn surrogate_reward(costs: &CostParams, p: f64, o: f64, y: f64, z: f64, mean: f64) -> f64 {
    p * z - costs.c1 * (mean - y) - costs.c2 * o
}

/// Conservative bound on `|R_t|` over the action grid.
pub fn r_max_bound(cfg: &EnvConfig) -> f64 {
    let d_max = cfg.demand.d_max;
    let revenue = cfg
        .grid
        .prices
        .iter()
        .map(|p| (p * d_max).abs())
        .fold(0.0, f64::max);
    revenue + cfg.costs.c1 * d_max + cfg.costs.c2 * cfg.grid.order_max() + cfg.costs.c3 * cfg.y_cap
}

/// Offline data with every reward completed.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedDataset {
    pub data: OfflineDataset,
    /// `r_obs` where observed, the surrogate otherwise.
    pub r_star: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImputeReport {
    pub censored: usize,
    pub conditional: usize,
    pub global_fallbacks: usize,
    pub midpoint_fallbacks: usize,
}

pub fn impute(
    ds: &OfflineDataset,
    model: &dyn CensoredMean,
    costs: &CostParams,
) -> Result<(AugmentedDataset, ImputeReport)> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let rows: Vec<(f64, Option<Fallback>)> = ds
        .transitions
        .par_iter()
        .map(|tr| match tr.r_obs {
            Some(r) => (r, None),
            None => {
                let (mean, fb) = model.censored_mean(tr);
                let r = surrogate_reward(costs, tr.a.p, tr.a.o, tr.w.y, tr.z, mean);
                (r, Some(fb))
            }
        })
        .collect();
    let mut report = ImputeReport::default();
    let mut r_star = Vec::with_capacity(rows.len());
    for (r, fb) in rows {
        if !r.is_finite() {
            return Err(Error::Numerical("non-finite surrogate reward".into()));
        }
        r_star.push(r);
        if let Some(fb) = fb {
            report.censored += 1;
            match fb {
                Fallback::Conditional => report.conditional += 1,
                Fallback::Global => report.global_fallbacks += 1,
                Fallback::Midpoint => report.midpoint_fallbacks += 1,
            }
        }
    }
    if report.global_fallbacks + report.midpoint_fallbacks > 0 {
        info!(
            "imputation fallbacks: {} pooled, {} midpoint of {} censored",
            report.global_fallbacks, report.midpoint_fallbacks, report.censored
        );
    }
    Ok((
        AugmentedDataset {
            data: ds.clone(),
            r_star,
        },
        report,
    ))
}

pub fn save_augmented(aug: &AugmentedDataset, path: impl AsRef<Path>) -> Result<()> {
    write_records(&aug.data, Some(&aug.r_star), path.as_ref())
}

pub fn load_augmented(path: impl AsRef<Path>) -> Result<AugmentedDataset> {
    let path = path.as_ref();
    match read_records(path)? {
        (data, Some(r_star)) => Ok(AugmentedDataset { data, r_star }),
        (_, None) => Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            reason: "dataset carries no imputed rewards; run impute first".into(),
        }),
    }
}
