use censored_fqi::env::{
    reward, ActionGrid, CostParams, DemandParams, EnvConfig, Environment, Episode, FeatureProcess,
    UnderlyingState,
};
use censored_fqi::oracle::{solve_oracle_dp, DpConfig, OracleModel};
use censored_fqi::survival::r_max_bound;
use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, Normal};

/// Five inventory levels and six actions, no covariates, independent demand.
fn tiny() -> EnvConfig {
    EnvConfig {
        demand: DemandParams {
            theta0: 1.5,
            theta_x: vec![],
            beta: 0.5,
            rho: 0.0,
            noise_sd: 1.0,
            d_max: 3.0,
            integer_valued: true,
        },
        costs: CostParams {
            c1: 2.0,
            c2: 0.2,
            c3: 0.5,
        },
        features: FeatureProcess::None,
        grid: ActionGrid {
            prices: vec![1.0, 2.0],
            orders: vec![0.0, 1.0, 2.0],
        },
        y_cap: 4.0,
        n_true: None,
    }
}

fn demand_pmf(cfg: &EnvConfig, p: f64) -> Vec<f64> {
    let mu = cfg.demand.location(&[], p, 0.0);
    let sd = cfg.demand.noise_sd;
    let n = Normal::new(mu, sd).unwrap();
    let top = cfg.demand.d_max as usize;
    (0..=top)
        .map(|k| {
            let lo = if k == 0 { 0.0 } else { n.cdf(k as f64 - 0.5) };
            let hi = if k == top { 1.0 } else { n.cdf(k as f64 + 0.5) };
            hi - lo
        })
        .collect()
}

/// Expected one-step reward and next-inventory distribution of `(y, action)`.
fn model(cfg: &EnvConfig, y: usize, a: usize) -> (f64, Vec<f64>) {
    let act = Environment::new(cfg.clone()).unwrap().grid().action(a);
    let pmf = demand_pmf(cfg, act.p);
    let levels = cfg.y_cap as usize + 1;
    let mut r = 0.0;
    let mut next = vec![0.0; levels];
    for (k, &pk) in pmf.iter().enumerate() {
        let (yv, kv) = (y as f64, k as f64);
        r += pk * reward(&cfg.costs, act.p, act.o, yv, kv);
        let y2 = (yv + act.o - kv).max(0.0).min(cfg.y_cap);
        next[y2 as usize] += pk;
    }
    (r, next)
}

#[test]
fn value_iteration_matches_policy_enumeration() {
    let cfg = tiny();
    let gamma = 0.9;
    let env = Environment::new(cfg.clone()).unwrap();
    let levels = cfg.y_cap as usize + 1;
    let n_actions = env.grid().len();
    let table: Vec<Vec<(f64, Vec<f64>)>> = (0..levels)
        .map(|y| (0..n_actions).map(|a| model(&cfg, y, a)).collect())
        .collect();

    // best value of every state over all deterministic stationary policies
    let mut best = vec![f64::NEG_INFINITY; levels];
    let total = n_actions.pow(levels as u32);
    for code in 0..total {
        let mut c = code;
        let mut p = DMatrix::<f64>::zeros(levels, levels);
        let mut r = DVector::<f64>::zeros(levels);
        for y in 0..levels {
            let a = c % n_actions;
            c /= n_actions;
            let (ry, ref next) = table[y][a];
            r[y] = ry;
            for (y2, &q) in next.iter().enumerate() {
                p[(y, y2)] = q;
            }
        }
        let lhs = DMatrix::<f64>::identity(levels, levels) - p * gamma;
        let v = lhs.lu().solve(&r).unwrap();
        for y in 0..levels {
            best[y] = best[y].max(v[y]);
        }
    }

    let oracle = OracleModel::new(&env, 5).unwrap();
    let cfg_dp = DpConfig {
        gamma,
        ..DpConfig::default()
    };
    let (values, _) = oracle.solve(&cfg_dp).unwrap();
    let d_levels = oracle.space().d_levels;
    let tol = 0.02 * r_max_bound(&cfg);
    for y in 0..levels {
        // demand is independent of its lag, so every d_prev slot agrees
        for d in 0..d_levels {
            let v = values.values[y * d_levels + d];
            assert!((v - best[y]).abs() < tol, "y {y} d {d}: dp {v} vs enumeration {}", best[y]);
        }
    }
}

#[test]
fn zero_discount_is_myopic() {
    let cfg = tiny();
    let env = Environment::new(cfg.clone()).unwrap();
    let levels = cfg.y_cap as usize + 1;
    let n_actions = env.grid().len();
    let dp = DpConfig {
        gamma: 0.0,
        ..DpConfig::default()
    };
    let (_, art) = solve_oracle_dp(&env, &dp).unwrap();
    let oracle = OracleModel::new(&env, 5).unwrap();
    let zeros = vec![0.0; oracle.n_states()];
    for y in 0..levels {
        let expected: Vec<f64> = (0..n_actions).map(|a| model(&cfg, y, a).0).collect();
        let q = oracle.q_values(&zeros, 0.0, &[], y as f64, 1.0, 0);
        for (a, b) in q.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-9, "q {a} vs expected reward {b}");
        }
        let best = expected.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let state = UnderlyingState {
            x: vec![],
            y: y as f64,
            d_prev: 1.0,
        };
        let ep = Episode::from_state(&env, state, art.window_cap());
        let chosen = env.grid().index_of(&art.act(&ep).action).unwrap();
        assert!(expected[chosen] >= best - 1e-9, "y {y}: chose {chosen}");
    }
}
