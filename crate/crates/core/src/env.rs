//! The underlying pricing and inventory process and its censored projection.
//!
//! Each period the retailer sees `S_t = (X_t, Y_t, D_{t-1})`, posts a price
//! and an order, then demand is realized from a clamped AR(1) model. Only
//! sales `Z_t = min(Y_t, D_t)` and the indicator `Δ_t = [Y_t >= D_t]` reach
//! the observed process.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::history::ObservedWindow;

/// Coefficients of the demand model
/// `D_t = theta0 + theta_x·X_t − beta·P_t + rho·D_{t−1} + ε_t`, clamped to `[0, d_max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandParams {
    pub theta0: f64,
    pub theta_x: Vec<f64>,
    pub beta: f64,
    pub rho: f64,
    pub noise_sd: f64,
    pub d_max: f64,
    /// Round realized demand to whole units (inventory is integral in the
    /// retail benchmark).
    #[serde(default)]
    pub integer_valued: bool,
}

impl DemandParams {
    /// Mean of the unclamped demand.
    pub fn location(&self, x: &[f64], p: f64, d_prev: f64) -> f64 {
        let covariates: f64 = self.theta_x.iter().zip(x).map(|(t, v)| t * v).sum();
        self.theta0 + covariates - self.beta * p + self.rho * d_prev
    }

    /// Applies the clamp (and rounding, when configured) to a raw draw.
    pub fn finalize(&self, raw: f64) -> f64 {
        let d = raw.clamp(0.0, self.d_max);
        if self.integer_valued {
            d.round().clamp(0.0, self.d_max)
        } else {
            d
        }
    }

    fn validate(&self, path: &str, x_dim: usize) -> Result<()> {
        if !(self.beta > 0.0) {
            return Err(Error::config(format!("{path}.beta"), "must be > 0"));
        }
        if !(self.rho.abs() < 1.0) {
            return Err(Error::config(format!("{path}.rho"), "|rho| must be < 1"));
        }
        if !(self.noise_sd >= 0.0) {
            return Err(Error::config(format!("{path}.noise_sd"), "must be >= 0"));
        }
        if !(self.d_max > 0.0) || !self.d_max.is_finite() {
            return Err(Error::config(format!("{path}.d_max"), "must be finite and > 0"));
        }
        if !self.theta0.is_finite() || self.theta_x.iter().any(|v| !v.is_finite()) {
            return Err(Error::config(format!("{path}.theta"), "coefficients must be finite"));
        }
        if self.theta_x.len() != x_dim {
            return Err(Error::config(
                format!("{path}.theta_x"),
                format!("expected {x_dim} coefficients, got {}", self.theta_x.len()),
            ));
        }
        Ok(())
    }
}

/// Per-unit stockout, ordering and holding costs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostParams {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

impl CostParams {
    fn validate(&self, path: &str) -> Result<()> {
        for (name, v) in [("c1", self.c1), ("c2", self.c2), ("c3", self.c3)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::config(format!("{path}.{name}"), "must be finite and >= 0"));
            }
        }
        Ok(())
    }
}

/// Exogenous covariate dynamics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureProcess {
    /// No covariates (`X_t` is empty).
    None,
    /// `X_t = (interest rate, economy state)`. The rate is a zero-mean AR(1)
    /// clamped to three stationary standard deviations; the economy is a
    /// two-state chain (0 = contracting, 1 = expanding) that flips with
    /// probability `econ_switch_prob` each period.
    RateEconomy {
        ir_ar_coeff: f64,
        ir_noise_sd: f64,
        econ_switch_prob: f64,
    },
}

impl FeatureProcess {
    pub fn dim(&self) -> usize {
        match self {
            FeatureProcess::None => 0,
            FeatureProcess::RateEconomy { .. } => 2,
        }
    }

    /// Stationary standard deviation of the interest rate.
    pub fn ir_stationary_sd(&self) -> f64 {
        match *self {
            FeatureProcess::None => 0.0,
            FeatureProcess::RateEconomy {
                ir_ar_coeff,
                ir_noise_sd,
                ..
            } => ir_noise_sd / (1.0 - ir_ar_coeff * ir_ar_coeff).sqrt(),
        }
    }

    /// Half-width of the interval the interest rate is clamped to.
    pub fn ir_bound(&self) -> f64 {
        3.0 * self.ir_stationary_sd()
    }

    /// Largest absolute value of each coordinate.
    pub fn coordinate_bounds(&self) -> Vec<f64> {
        match self {
            FeatureProcess::None => vec![],
            FeatureProcess::RateEconomy { .. } => vec![self.ir_bound(), 1.0],
        }
    }

    pub fn stationary_mean(&self) -> Vec<f64> {
        match self {
            FeatureProcess::None => vec![],
            FeatureProcess::RateEconomy { .. } => vec![0.0, 0.5],
        }
    }

    pub fn initial<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            FeatureProcess::None => vec![],
            FeatureProcess::RateEconomy { .. } => {
                let b = self.ir_bound();
                let z: f64 = rng.sample(StandardNormal);
                let ir = (z * self.ir_stationary_sd()).clamp(-b, b);
                let econ = if rng.random::<f64>() < 0.5 { 1.0 } else { 0.0 };
                vec![ir, econ]
            }
        }
    }

    pub fn next<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Vec<f64> {
        match *self {
            FeatureProcess::None => vec![],
            FeatureProcess::RateEconomy {
                ir_ar_coeff,
                ir_noise_sd,
                econ_switch_prob,
            } => {
                let b = self.ir_bound();
                let z: f64 = rng.sample(StandardNormal);
                let ir = (ir_ar_coeff * x[0] + ir_noise_sd * z).clamp(-b, b);
                let flip = rng.random::<f64>() < econ_switch_prob;
                let econ = if flip { 1.0 - x[1] } else { x[1] };
                vec![ir, econ]
            }
        }
    }

    fn validate(&self, path: &str) -> Result<()> {
        if let FeatureProcess::RateEconomy {
            ir_ar_coeff,
            ir_noise_sd,
            econ_switch_prob,
        } = *self
        {
            if !(ir_ar_coeff.abs() < 1.0) {
                return Err(Error::config(format!("{path}.ir_ar_coeff"), "|coeff| must be < 1"));
            }
            if !(ir_noise_sd >= 0.0) || !ir_noise_sd.is_finite() {
                return Err(Error::config(format!("{path}.ir_noise_sd"), "must be >= 0"));
            }
            if !(0.0..=1.0).contains(&econ_switch_prob) {
                return Err(Error::config(
                    format!("{path}.econ_switch_prob"),
                    "must lie in [0, 1]",
                ));
            }
        }
        Ok(())
    }
}

/// A (price, order) decision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub p: f64,
    pub o: f64,
}

/// Finite price × order grid. Actions are enumerated price-major in
/// ascending order, which is also the tie-break order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionGrid {
    pub prices: Vec<f64>,
    pub orders: Vec<f64>,
}

impl ActionGrid {
    pub fn len(&self) -> usize {
        self.prices.len() * self.orders.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn action(&self, idx: usize) -> Action {
        let n_o = self.orders.len();
        Action {
            p: self.prices[idx / n_o],
            o: self.orders[idx % n_o],
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = Action> + '_ {
        (0..self.len()).map(move |i| self.action(i))
    }

    pub fn price_index(&self, p: f64) -> Option<usize> {
        self.prices.iter().position(|&v| v == p)
    }

    pub fn order_index(&self, o: f64) -> Option<usize> {
        self.orders.iter().position(|&v| v == o)
    }

    pub fn index_of(&self, a: &Action) -> Option<usize> {
        Some(self.price_index(a.p)? * self.orders.len() + self.order_index(a.o)?)
    }

    /// Highest price with the largest order.
    pub fn a_max(&self) -> Action {
        Action {
            p: *self.prices.last().expect("validated grid"),
            o: *self.orders.last().expect("validated grid"),
        }
    }

    pub fn order_max(&self) -> f64 {
        self.orders.last().copied().unwrap_or(0.0)
    }

    pub fn price_max(&self) -> f64 {
        self.prices.last().copied().unwrap_or(0.0)
    }

    fn validate(&self, path: &str) -> Result<()> {
        let ascending = |v: &[f64]| v.windows(2).all(|w| w[0] < w[1]);
        if self.prices.is_empty() || !ascending(&self.prices) {
            return Err(Error::config(
                format!("{path}.prices"),
                "must be non-empty and strictly increasing",
            ));
        }
        if self.prices.iter().any(|&p| !(p > 0.0) || !p.is_finite()) {
            return Err(Error::config(format!("{path}.prices"), "prices must be > 0"));
        }
        if self.orders.is_empty() || !ascending(&self.orders) {
            return Err(Error::config(
                format!("{path}.orders"),
                "must be non-empty and strictly increasing",
            ));
        }
        if self.orders.iter().any(|&o| !(o >= 0.0) || !o.is_finite()) {
            return Err(Error::config(format!("{path}.orders"), "orders must be >= 0"));
        }
        Ok(())
    }
}

/// Full environment configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub demand: DemandParams,
    pub costs: CostParams,
    pub features: FeatureProcess,
    pub grid: ActionGrid,
    /// Inventory capacity.
    pub y_cap: f64,
    /// Longest censoring run the simulator allows. When a draw would extend a
    /// run past this length it is redrawn from the demand law restricted to
    /// `D <= Y`. `None` disables the restriction.
    #[serde(default)]
    pub n_true: Option<usize>,
}

impl Default for EnvConfig {
    /// The retail benchmark: capacity 25, orders 0..=15, prices
    /// {4, 4.25, 4.5}, costs (2, 3, 1), censoring runs capped at 3. The
    /// demand and covariate coefficients are not published and are set here.
    fn default() -> Self {
        EnvConfig {
            demand: DemandParams {
                theta0: 20.5,
                theta_x: vec![-1.0, 2.0],
                beta: 4.0,
                rho: 0.5,
                noise_sd: 2.0,
                d_max: 25.0,
                integer_valued: true,
            },
            costs: CostParams {
                c1: 2.0,
                c2: 3.0,
                c3: 1.0,
            },
            features: FeatureProcess::RateEconomy {
                ir_ar_coeff: 0.8,
                ir_noise_sd: 0.6,
                econ_switch_prob: 0.1,
            },
            grid: ActionGrid {
                prices: vec![4.0, 4.25, 4.5],
                orders: (0..=15).map(f64::from).collect(),
            },
            y_cap: 25.0,
            n_true: Some(3),
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        self.features.validate("env.features")?;
        self.demand.validate("env.demand", self.features.dim())?;
        self.costs.validate("env.costs")?;
        self.grid.validate("env.grid")?;
        if !(self.y_cap >= 0.0) || !self.y_cap.is_finite() {
            return Err(Error::config("env.y_cap", "must be finite and >= 0"));
        }
        Ok(())
    }

    /// The same dynamics with the censoring-run restriction removed. The
    /// restriction is a data-collection device; reference solvers and
    /// policy evaluation run on these dynamics.
    pub fn without_truncation(&self) -> EnvConfig {
        EnvConfig {
            n_true: None,
            ..self.clone()
        }
    }

    /// Stable hash of the configuration; artifacts and datasets carry it.
    pub fn fingerprint(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&bytes);
        hex::encode(&digest[..8])
    }
}

/// Underlying (fully observed) state `S_t = (X_t, Y_t, D_{t−1})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnderlyingState {
    pub x: Vec<f64>,
    pub y: f64,
    pub d_prev: f64,
}

/// Observed state `W_t = (X_t, Y_t, Z_{t−1}, Δ_{t−1})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub x: Vec<f64>,
    pub y: f64,
    pub z_prev: f64,
    pub delta_prev: bool,
}

pub fn draw_demand<R: Rng + ?Sized>(
    params: &DemandParams,
    x: &[f64],
    p: f64,
    d_prev: f64,
    rng: &mut R,
) -> f64 {
    let eps: f64 = rng.sample(StandardNormal);
    params.finalize(params.location(x, p, d_prev) + params.noise_sd * eps)
}

/// Draws demand from the same law conditioned on `D <= cap`.
///
/// Uses inverse-CDF sampling of the upper-truncated Gaussian shock, so the
/// draw consumes exactly one uniform.
pub fn draw_demand_at_most<R: Rng + ?Sized>(
    params: &DemandParams,
    x: &[f64],
    p: f64,
    d_prev: f64,
    cap: f64,
    rng: &mut R,
) -> f64 {
    let mu = params.location(x, p, d_prev);
    let u: f64 = rng.random();
    if cap >= params.d_max {
        let eps = if params.noise_sd > 0.0 {
            Normal::new(0.0, 1.0).unwrap().inverse_cdf(u.clamp(1e-300, 1.0 - 1e-16))
        } else {
            0.0
        };
        return params.finalize(mu + params.noise_sd * eps);
    }
    // finalize(raw) <= cap  <=>  raw < cap + 0.5 when rounding, raw <= cap otherwise.
    let upper = if params.integer_valued {
        cap.floor() + 0.5
    } else {
        cap
    };
    let fallback = params.finalize(mu.min(upper)).min(cap.max(0.0));
    if params.noise_sd <= 0.0 {
        return if params.integer_valued {
            fallback.min(cap.floor())
        } else {
            fallback
        };
    }
    let std = Normal::new(0.0, 1.0).unwrap();
    let mass = std.cdf((upper - mu) / params.noise_sd);
    if mass < 1e-15 {
        return if params.integer_valued {
            fallback.min(cap.floor())
        } else {
            fallback
        };
    }
    let q = (u * mass).clamp(1e-300, mass);
    let raw = mu + params.noise_sd * std.inverse_cdf(q);
    let d = params.finalize(raw.min(upper));
    if params.integer_valued {
        d.min(cap.floor())
    } else {
        d.min(cap)
    }
}

/// One-period profit: revenue less stockout, ordering and holding costs.
pub fn reward(costs: &CostParams, p: f64, o: f64, y: f64, d: f64) -> f64 {
    p * y.min(d) - costs.c1 * (d - y).max(0.0) - costs.c2 * o - costs.c3 * (y - d).max(0.0)
}

/// Projects the underlying state onto the observed coordinates.
pub fn observe(state: &UnderlyingState, z_prev: f64, delta_prev: bool) -> Observation {
    Observation {
        x: state.x.clone(),
        y: state.y,
        z_prev,
        delta_prev,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next: UnderlyingState,
    pub reward: f64,
    /// Sales `Z_t`.
    pub z: f64,
    /// `Δ_t`: demand fully observed.
    pub delta: bool,
    /// True demand, hidden from the observed process when `delta` is false.
    pub demand: f64,
}

/// A validated environment.
#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    cfg: EnvConfig,
}

impl Environment {
    pub fn new(cfg: EnvConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Environment { cfg })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn grid(&self) -> &ActionGrid {
        &self.cfg.grid
    }

    pub fn x_dim(&self) -> usize {
        self.cfg.features.dim()
    }

    /// Long-run mean demand at the middle price and mean covariates.
    pub fn stationary_demand(&self) -> f64 {
        let d = &self.cfg.demand;
        let prices = &self.cfg.grid.prices;
        let p_mid = prices[prices.len() / 2];
        let mu = d.location(&self.cfg.features.stationary_mean(), p_mid, 0.0) / (1.0 - d.rho);
        d.finalize(mu)
    }

    /// Initial state: stationary covariates, inventory uniform on
    /// `[0, y_cap]` (whole units when demand is integral), lagged demand at
    /// its long-run mean.
    pub fn initial_state<R: Rng + ?Sized>(&self, rng: &mut R) -> UnderlyingState {
        let x = self.cfg.features.initial(rng);
        let u: f64 = rng.random();
        let y = if self.cfg.demand.integer_valued {
            (u * (self.cfg.y_cap.floor() + 1.0)).floor().min(self.cfg.y_cap.floor())
        } else {
            u * self.cfg.y_cap
        };
        UnderlyingState {
            x,
            y,
            d_prev: self.stationary_demand(),
        }
    }

    fn finish_step<R: Rng + ?Sized>(
        &self,
        state: &UnderlyingState,
        action: &Action,
        d: f64,
        rng: &mut R,
    ) -> StepOutcome {
        let y = state.y;
        let r = reward(&self.cfg.costs, action.p, action.o, y, d);
        let next_y = (y + action.o - d).max(0.0).min(self.cfg.y_cap);
        let next_x = self.cfg.features.next(&state.x, rng);
        StepOutcome {
            next: UnderlyingState {
                x: next_x,
                y: next_y,
                d_prev: d,
            },
            reward: r,
            z: y.min(d),
            delta: y >= d,
            demand: d,
        }
    }

    /// Advances the underlying process one period without run truncation.
    pub fn step<R: Rng + ?Sized>(
        &self,
        state: &UnderlyingState,
        action: &Action,
        rng: &mut R,
    ) -> StepOutcome {
        let d = draw_demand(&self.cfg.demand, &state.x, action.p, state.d_prev, rng);
        self.finish_step(state, action, d, rng)
    }

    /// Advances one period given the number of censored periods immediately
    /// preceding it; a draw that would push the run past `n_true` is redrawn
    /// below the current inventory.
    pub fn step_capped<R: Rng + ?Sized>(
        &self,
        state: &UnderlyingState,
        action: &Action,
        preceding_run: usize,
        rng: &mut R,
    ) -> StepOutcome {
        let params = &self.cfg.demand;
        let mut d = draw_demand(params, &state.x, action.p, state.d_prev, rng);
        if let Some(n_true) = self.cfg.n_true {
            if preceding_run >= n_true && d > state.y {
                d = draw_demand_at_most(params, &state.x, action.p, state.d_prev, state.y, rng);
            }
        }
        self.finish_step(state, action, d, rng)
    }
}

/// A single simulated trajectory that tracks the observed window alongside
/// the latent state.
#[derive(Debug, Clone)]
pub struct Episode<'a> {
    env: &'a Environment,
    state: UnderlyingState,
    run: usize,
    window: ObservedWindow,
}

impl<'a> Episode<'a> {
    /// Starts from `initial_state` with the `Δ_{−1} = 1` convention.
    pub fn start<R: Rng + ?Sized>(env: &'a Environment, window_cap: usize, rng: &mut R) -> Self {
        let state = env.initial_state(rng);
        Self::from_state(env, state, window_cap)
    }

    pub fn from_state(env: &'a Environment, state: UnderlyingState, window_cap: usize) -> Self {
        let first = observe(&state, state.d_prev, true);
        Episode {
            env,
            state,
            run: 0,
            window: ObservedWindow::new(first, window_cap),
        }
    }

    pub fn env(&self) -> &'a Environment {
        self.env
    }

    pub fn state(&self) -> &UnderlyingState {
        &self.state
    }

    pub fn window(&self) -> &ObservedWindow {
        &self.window
    }

    /// Consecutive censored periods immediately preceding the current one.
    pub fn censor_run(&self) -> usize {
        self.run
    }

    pub fn advance<R: Rng + ?Sized>(&mut self, action: Action, rng: &mut R) -> StepOutcome {
        let out = self.env.step_capped(&self.state, &action, self.run, rng);
        self.run = if out.delta { 0 } else { self.run + 1 };
        self.state = out.next.clone();
        let obs = observe(&self.state, out.z, out.delta);
        self.window.push(action, obs);
        out
    }
}
