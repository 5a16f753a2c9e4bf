//! Acceptance criteria. Run with `cargo test -p cfqi-cli --test acceptance`;
//! pass criterion numbers (`-- 4 9`) to run a subset. Prints one PASS/FAIL
//! line per criterion and exits nonzero if any fails.

use std::collections::BTreeMap;
use std::time::Instant;

use cfqi_cli::config::{BehaviorKind, ExperimentConfig};
use cfqi_cli::experiment::{cmd_experiment, ResultRow};
use censored_fqi::approx::{calibrated_beta, ridge_fit, FeatureLayout, FeatureMap, FeatureScales};
use censored_fqi::censor::{default_window_k, estimate_n_hat};
use censored_fqi::data::{generate_dataset, generate_dataset_with_truth, BehaviorPolicy};
use censored_fqi::env::{
    reward, ActionGrid, CostParams, DemandParams, EnvConfig, Environment, FeatureProcess,
    Observation,
};
use censored_fqi::fqi::{run_fqi, FqiConfig, FqiMode, FunctionClass, PolicyBody};
use censored_fqi::history::HistoryBlock;
use censored_fqi::oracle::{evaluate_policy, solve_censored_dp, solve_oracle_dp, DpConfig};
use censored_fqi::rng::stream;
use censored_fqi::survival::{fit_survival, impute, r_max_bound, surrogate_reward, SurvivalCurve};
use rand::Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, Normal};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).unwrap()
}

/// `P(D = k)` for the rounded, clamped Gaussian demand with integer `d_max`.
fn rounded_pmf(d: &DemandParams, mu: f64) -> Vec<f64> {
    let n = std_normal();
    let top = d.d_max.round() as usize;
    let cdf = |v: f64| n.cdf((v - mu) / d.noise_sd);
    (0..=top)
        .map(|k| {
            let lo = if k == 0 { 0.0 } else { cdf(k as f64 - 0.5) };
            let hi = if k == top { 1.0 } else { cdf(k as f64 + 0.5) };
            hi - lo
        })
        .collect()
}

fn tail_mean(pmf: &[f64], y: f64) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (k, p) in pmf.iter().enumerate() {
        if k as f64 > y {
            num += k as f64 * p;
            den += p;
        }
    }
    num / den
}

fn c1_surrogate_unbiased() -> Outcome {
    let cfg = EnvConfig::default().without_truncation();
    let env = Environment::new(cfg.clone()).unwrap();
    let (ds, truth) =
        generate_dataset_with_truth(&env, &BehaviorPolicy::Uniform, 9000, 50, 101).unwrap();
    let mut diffs = Vec::with_capacity(100_000);
    for (tr, tru) in ds.transitions.iter().zip(&truth) {
        if tr.delta {
            continue;
        }
        let mu = cfg.demand.location(&tr.w.x, tr.a.p, tru.d_prev);
        let mean = tail_mean(&rounded_pmf(&cfg.demand, mu), tr.w.y);
        let r_tilde = surrogate_reward(&cfg.costs, tr.a.p, tr.a.o, tr.w.y, tr.z, mean);
        diffs.push(tru.reward - r_tilde);
        if diffs.len() == 100_000 {
            break;
        }
    }
    if diffs.len() < 100_000 {
        return outcome(false, format!("only {} censored transitions", diffs.len()));
    }
    let (m, se) = mean_se(&diffs);
    outcome(
        m.abs() <= 3.0 * se,
        format!("mean(R - R~) = {m:.4}, se {se:.4}, n = {}", diffs.len()),
    )
}

/// KM tail mean from `n` draws censored at independent levels.
fn km_tail_mean(
    draw: impl Fn(&mut dyn rand::RngCore) -> f64,
    censor: impl Fn(&mut dyn rand::RngCore) -> f64,
    y: f64,
    d_max: f64,
    seed: u64,
) -> f64 {
    let mut rng = stream(seed, 0);
    let obs: Vec<(f64, bool)> = (0..10_000)
        .map(|_| {
            let d = draw(&mut rng);
            let c = censor(&mut rng);
            (d.min(c), d <= c)
        })
        .collect();
    SurvivalCurve::kaplan_meier(&obs).conditional_mean(y, d_max).unwrap()
}

fn c2_tail_means() -> Outcome {
    let uni = km_tail_mean(
        |r| r.random::<f64>() * 10.0,
        |r| r.random::<f64>() * 15.0,
        6.0,
        10.0,
        21,
    );
    let norm = km_tail_mean(
        |r| (5.0 + r.sample::<f64, _>(StandardNormal)).clamp(0.0, 10.0),
        |r| 2.0 + r.random::<f64>() * 8.0,
        5.0,
        10.0,
        22,
    );
    let want_norm = 5.0 + (2.0 / std::f64::consts::PI).sqrt();
    outcome(
        (uni - 8.0).abs() <= 0.1 && (norm - want_norm).abs() <= 0.1,
        format!("uniform {uni:.4} (want 8.0), normal {norm:.4} (want {want_norm:.4})"),
    )
}

fn c3_km_correctness() -> Outcome {
    let mut rng = stream(31, 0);
    // uncensored, with ties
    let sample: Vec<f64> = (0..10_000)
        .map(|_| (6.0 + 2.0 * rng.sample::<f64, _>(StandardNormal)).round().max(0.0))
        .collect();
    let km = SurvivalCurve::kaplan_meier(&sample.iter().map(|&d| (d, true)).collect::<Vec<_>>());
    let mut exact_dev = 0.0f64;
    for i in 0..=30 {
        let c = i as f64 * 0.5;
        let emp = sample.iter().filter(|&&d| d > c).count() as f64 / sample.len() as f64;
        exact_dev = exact_dev.max((km.survival(c).unwrap() - emp).abs());
    }
    // independent random censoring, and censoring at a fixed level
    let truth = |c: f64| 1.0 - std_normal().cdf((c - 10.0) / 3.0);
    let draws: Vec<f64> = (0..10_000)
        .map(|_| 10.0 + 3.0 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let random: Vec<(f64, bool)> = draws
        .iter()
        .map(|&d| {
            let c = rng.random::<f64>() * 20.0;
            (d.min(c), d <= c)
        })
        .collect();
    let fixed: Vec<(f64, bool)> = draws.iter().map(|&d| (d.min(12.0), d <= 12.0)).collect();
    let sup = |curve: &SurvivalCurve, hi: f64| {
        (0..=2000)
            .map(|i| i as f64 * hi / 2000.0)
            .filter_map(|c| curve.survival(c).map(|s| (s - truth(c)).abs()))
            .fold(0.0f64, f64::max)
    };
    let err_random = sup(&SurvivalCurve::kaplan_meier(&random), 20.0);
    let err_fixed = sup(&SurvivalCurve::kaplan_meier(&fixed), 11.999);
    outcome(
        exact_dev <= 1e-12 && err_random <= 0.03 && err_fixed <= 0.03,
        format!(
            "uncensored max |KM - empirical| = {exact_dev:.1e}; sup error random censoring {err_random:.4}, fixed censoring {err_fixed:.4}"
        ),
    )
}

/// Tiny censoring-free environment. A zero run limit redraws any demand
/// above inventory from the demand law restricted to `D <= y`, so every
/// period is uncensored and the inventory process is an exact finite MDP.
fn tiny_env() -> EnvConfig {
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
        n_true: Some(0),
    }
}

fn c4_tabular_equivalence() -> Outcome {
    let cfg = tiny_env();
    let env = Environment::new(cfg.clone()).unwrap();
    let ds = generate_dataset(&env, &BehaviorPolicy::Uniform, 200, 51, 41).unwrap();
    let censored = ds.transitions.iter().filter(|t| !t.delta).count();
    let model = fit_survival(&ds, &Default::default()).unwrap();
    let (aug, _) = impute(&ds, &model, &cfg.costs).unwrap();
    let k = 30;
    let gamma = 0.9;
    let fqi = FqiConfig {
        iterations: k,
        gamma,
        function_class: FunctionClass::Ridge,
        beta: 0.0,
        lambda: 1.0,
        layout: FeatureLayout::Tabular,
        ..FqiConfig::default()
    };
    let (art, report) = run_fqi(&aug, &fqi, FqiMode::Cfqi, 1).unwrap();
    let PolicyBody::Fitted { ensemble, .. } = &art.body else {
        return outcome(false, "unexpected artifact kind".into());
    };

    // exact value iteration with the same number of backups
    let grid = &cfg.grid;
    let ny = cfg.y_cap as usize + 1;
    let pmfs: Vec<Vec<f64>> = grid
        .prices
        .iter()
        .map(|&p| rounded_pmf(&cfg.demand, cfg.demand.location(&[], p, 0.0)))
        .collect();
    let mut q = vec![vec![0.0; grid.len()]; ny];
    for _ in 0..k {
        let v: Vec<f64> = q.iter().map(|row| row.iter().copied().fold(f64::MIN, f64::max)).collect();
        q = (0..ny)
            .map(|y| {
                grid.iter()
                    .map(|a| {
                        let pi = grid.price_index(a.p).unwrap();
                        let mass: f64 = pmfs[pi].iter().take(y + 1).sum();
                        pmfs[pi]
                            .iter()
                            .take(y + 1)
                            .enumerate()
                            .map(|(d, pr)| {
                                let pr = pr / mass;
                                let (yf, df) = (y as f64, d as f64);
                                let next = (yf + a.o - df).max(0.0).min(cfg.y_cap) as usize;
                                pr * (reward(&cfg.costs, a.p, a.o, yf, df) + gamma * v[next])
                            })
                            .sum()
                    })
                    .collect()
            })
            .collect();
    }
    let mut sup = 0.0f64;
    for (y, q_row) in q.iter().enumerate() {
        let block = HistoryBlock::single(Observation {
            x: vec![],
            y: y as f64,
            z_prev: 1.0,
            delta_prev: true,
        });
        let fitted = ensemble.q_values(&block, grid, false).unwrap();
        for (a, b) in fitted.iter().zip(q_row) {
            sup = sup.max((a - b).abs());
        }
    }
    let tol = 0.1 * r_max_bound(&cfg);
    outcome(
        censored == 0 && report.n_hat == 0 && sup <= tol,
        format!(
            "sup |Q_fqi - Q_vi| = {sup:.4} (tolerance {tol:.2}); {} transitions, {censored} censored, n_hat {}",
            ds.len(),
            report.n_hat
        ),
    )
}

fn c5_n_hat_consistency() -> Outcome {
    let env = Environment::new(EnvConfig::default()).unwrap();
    let hits = (0..40u64)
        .filter(|&s| {
            let ds = generate_dataset(&env, &BehaviorPolicy::Uniform, 20, 51, 500 + s).unwrap();
            let k = default_window_k(ds.n_traj, ds.horizon, 0.9).min(ds.horizon);
            estimate_n_hat(&ds, k).unwrap() == 3
        })
        .count();
    outcome(hits >= 38, format!("n_hat = 3 in {hits}/40 seeds at N*T = 1000"))
}

/// Stratified two-sample z statistic on a small single-price instance.
/// Transitions after a censored period are stratified by the observed state
/// `(y, z_prev)` and split by whether the previous order was large. Given
/// the observed state, a larger previous order means larger censored demand
/// (inventory is `(y + o − d)⁺`). Under a Markov observed process the split
/// carries no information about the next demand.
fn markov_witness(rho: f64, seed: u64) -> f64 {
    let mean = 3.0;
    let cfg = EnvConfig {
        demand: DemandParams {
            theta0: 0.5 * 4.0 + mean * (1.0 - rho),
            theta_x: vec![],
            beta: 0.5,
            rho,
            noise_sd: 1.0,
            d_max: 6.0,
            integer_valued: true,
        },
        costs: EnvConfig::default().costs,
        features: FeatureProcess::None,
        grid: ActionGrid {
            prices: vec![4.0],
            orders: vec![0.0, 1.0, 2.0, 3.0],
        },
        y_cap: 6.0,
        n_true: None,
    };
    let env = Environment::new(cfg).unwrap();
    let (ds, truth) =
        generate_dataset_with_truth(&env, &BehaviorPolicy::Uniform, 1000, 50, seed).unwrap();
    let mut strata: BTreeMap<(i64, i64), [Vec<f64>; 2]> = BTreeMap::new();
    let mut used = 0;
    for i in 1..ds.transitions.len() {
        let (prev, tr) = (&ds.transitions[i - 1], &ds.transitions[i]);
        if prev.traj != tr.traj || tr.t < 2 || tr.w.delta_prev {
            continue;
        }
        let key = (tr.w.y as i64, tr.w.z_prev as i64);
        let high = prev.a.o >= 2.0;
        strata.entry(key).or_default()[high as usize].push(truth[i].demand);
        used += 1;
        if used == 10_000 {
            break;
        }
    }
    assert_eq!(used, 10_000, "not enough censored transitions");
    let (mut num, mut var) = (0.0, 0.0);
    for [a, b] in strata.values() {
        let (n1, n2) = (a.len() as f64, b.len() as f64);
        if a.len() < 2 || b.len() < 2 {
            continue;
        }
        let m1 = a.iter().sum::<f64>() / n1;
        let m2 = b.iter().sum::<f64>() / n2;
        let ss: f64 = a.iter().map(|x| (x - m1).powi(2)).sum::<f64>()
            + b.iter().map(|x| (x - m2).powi(2)).sum::<f64>();
        let pooled = ss / (n1 + n2 - 2.0);
        let w = n1 * n2 / (n1 + n2);
        num += w * (m1 - m2);
        var += w * pooled;
    }
    num / var.sqrt()
}

fn c6_markov_witness() -> Outcome {
    let crit = 2.0 * (1.0 - std_normal().cdf(2.5758)); // two-sided 1% level
    let reject = |z: f64| 2.0 * (1.0 - std_normal().cdf(z.abs())) < 0.01;
    let z_dep: Vec<f64> = (0..5).map(|s| markov_witness(0.5, 600 + s)).collect();
    let z_ind: Vec<f64> = (0..50).map(|s| markov_witness(0.0, 700 + s)).collect();
    let dep_rejects = z_dep.iter().filter(|&&z| reject(z)).count();
    let ind_rejects = z_ind.iter().filter(|&&z| reject(z)).count();
    // P(Binomial(50, 0.01) >= 4) < 0.002
    outcome(
        dep_rejects == 5 && ind_rejects <= 3,
        format!(
            "rho=0.5: rejected {dep_rejects}/5 (min |z| {:.1}); rho=0: rejected {ind_rejects}/50 at alpha {crit:.3}",
            z_dep.iter().map(|z| z.abs()).fold(f64::INFINITY, f64::min)
        ),
    )
}

fn ladder_config(dir: &std::path::Path, behavior: BehaviorKind) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.data.behavior = behavior;
    cfg.data.replicates = 10;
    cfg.algos = vec![FqiMode::Cfqi, FqiMode::Pcfqi];
    cfg.output.out_dir = dir.to_path_buf();
    cfg
}

/// `(n, algo) -> returns over replicates`, failing on any failed cell.
fn ladder_returns(rows: &[ResultRow]) -> Result<BTreeMap<(usize, String), Vec<f64>>, String> {
    let mut out: BTreeMap<(usize, String), Vec<f64>> = BTreeMap::new();
    for r in rows {
        let m = r
            .mean_return
            .ok_or_else(|| format!("cell {} n={} r={} failed", r.algo, r.n_episodes, r.replicate))?;
        out.entry((r.n_episodes, r.algo.clone())).or_default().push(m);
    }
    Ok(out)
}

fn run_ladder(behavior: BehaviorKind) -> Result<BTreeMap<(usize, String), Vec<f64>>, String> {
    let dir = shared_dir();
    let summary = cmd_experiment(&ladder_config(dir, behavior)).map_err(|e| e.to_string())?;
    ladder_returns(&summary.rows)
}

fn shared_dir() -> &'static std::path::Path {
    use std::sync::OnceLock;
    static DIR: OnceLock<tempfile::TempDir> = OnceLock::new();
    DIR.get_or_init(|| tempfile::tempdir().unwrap()).path()
}

fn avg(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn c7_uniform_ladder() -> Outcome {
    let returns = match run_ladder(BehaviorKind::Uniform) {
        Ok(r) => r,
        Err(e) => return outcome(false, e),
    };
    let levels: Vec<usize> = returns.keys().map(|k| k.0).collect::<std::collections::BTreeSet<_>>().into_iter().collect();
    let curve = |algo: &str| -> Vec<f64> {
        levels.iter().map(|&n| avg(&returns[&(n, algo.to_string())])).collect()
    };
    let (c, p) = (curve("cfqi"), curve("pcfqi"));
    let monotone = |v: &[f64]| {
        v.windows(2).filter(|w| w[1] >= w[0]).count() as f64 / (v.len() - 1) as f64
    };
    let (mc, mp) = (monotone(&c), monotone(&p));
    let last = levels.len() - 1;
    outcome(
        c[last] >= p[last] && mc >= 0.7 && mp >= 0.7,
        format!(
            "N={}: cfqi {:.2} vs pcfqi {:.2}; nondecreasing pairs cfqi {:.0}%, pcfqi {:.0}%; cfqi curve {:?}; pcfqi curve {:?}",
            levels[last],
            c[last],
            p[last],
            100.0 * mc,
            100.0 * mp,
            c.iter().map(|v| (v * 10.0).round() / 10.0).collect::<Vec<_>>(),
            p.iter().map(|v| (v * 10.0).round() / 10.0).collect::<Vec<_>>()
        ),
    )
}

fn c8_optimal_ladder() -> Outcome {
    let returns = match run_ladder(BehaviorKind::Optimal) {
        Ok(r) => r,
        Err(e) => return outcome(false, e),
    };
    let n_max = returns.keys().map(|k| k.0).max().unwrap();
    let c = &returns[&(n_max, "cfqi".to_string())];
    let p = &returns[&(n_max, "pcfqi".to_string())];
    let wins = c.iter().zip(p).filter(|(c, p)| p >= c).count();
    let frac = wins as f64 / c.len() as f64;
    outcome(
        frac >= 0.7,
        format!(
            "N={n_max}: pcfqi >= cfqi in {wins}/{} replicates; means pcfqi {:.2}, cfqi {:.2}",
            c.len(),
            avg(p),
            avg(c)
        ),
    )
}

fn c9_cost_of_censoring() -> Outcome {
    let env = Environment::new(EnvConfig::default()).unwrap();
    let dp = DpConfig::default();
    let (_, oracle) = solve_oracle_dp(&env, &dp).unwrap();
    let (_, censored) = solve_censored_dp(&env, &dp).unwrap();
    let ro = evaluate_policy(&oracle, &env, 2000, 50, dp.gamma, 9).unwrap();
    let rc = evaluate_policy(&censored, &env, 2000, 50, dp.gamma, 9).unwrap();
    let diffs: Vec<f64> = ro.returns.iter().zip(&rc.returns).map(|(a, b)| a - b).collect();
    let (gap, se) = mean_se(&diffs);
    outcome(
        gap - 3.0 * se >= 0.0,
        format!(
            "oracle {:.2}, censored {:.2}; paired gap {gap:.2} (3 sigma = {:.2})",
            ro.mean_return,
            rc.mean_return,
            3.0 * se
        ),
    )
}

fn c10_uq_coverage() -> Outcome {
    let cfg = EnvConfig::default();
    let env = Environment::new(cfg.clone()).unwrap();
    let ds = generate_dataset(&env, &BehaviorPolicy::Uniform, 80, 51, 1001).unwrap();
    let map = FeatureMap::new(FeatureLayout::Linear, 0, FeatureScales::from_env(&cfg));
    let phis: Vec<Vec<f64>> = ds
        .transitions
        .iter()
        .map(|t| map.featurize(&HistoryBlock::single(t.w.clone()), &t.a).unwrap())
        .collect();
    let mut rng = stream(1002, 0);
    let theta: Vec<f64> = (0..map.dim()).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
    let theta_norm = theta.iter().map(|v| v * v).sum::<f64>().sqrt();
    let truth = |phi: &[f64]| phi.iter().zip(&theta).map(|(a, b)| a * b).sum::<f64>();
    let sigma = 1.0;
    let (train, held) = phis.split_at(phis.len() - 1000);
    let y: Vec<f64> = train
        .iter()
        .map(|phi| truth(phi) + sigma * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let lambda = 1.0;
    let model = ridge_fit(train, &y, lambda).unwrap();
    let eps = 0.05;
    let beta = calibrated_beta(sigma, map.dim(), train.len(), lambda, map.norm_bound(), theta_norm, eps);
    let covered = held
        .iter()
        .filter(|phi| (model.predict(phi) - truth(phi)).abs() <= model.uncertainty(beta, phi))
        .count();
    let frac = covered as f64 / held.len() as f64;
    outcome(
        frac >= 1.0 - eps,
        format!(
            "coverage {covered}/{} = {frac:.3} at beta {beta:.2} (target {:.2}), {} training rows",
            held.len(),
            1.0 - eps,
            train.len()
        ),
    )
}

fn c11_determinism() -> Outcome {
    let run = || {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ExperimentConfig::default();
        cfg.data.episodes = vec![5, 10];
        cfg.data.replicates = 2;
        cfg.output.out_dir = dir.path().to_path_buf();
        cfg.make_quick();
        let summary = cmd_experiment(&cfg).map_err(|e| e.to_string())?;
        let results = std::fs::read(&summary.results).map_err(|e| e.to_string())?;
        let refs = std::fs::read(&summary.references).map_err(|e| e.to_string())?;
        Ok::<_, String>((results, refs))
    };
    match (run(), run()) {
        (Ok(a), Ok(b)) => outcome(
            a == b,
            format!("results.csv {} bytes, identical: {}", a.0.len(), a == b),
        ),
        (Err(e), _) | (_, Err(e)) => outcome(false, e),
    }
}

type Criterion = (usize, &'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 11] = [
        (1, "surrogate reward is unbiased", c1_surrogate_unbiased),
        (2, "conditional tail means", c2_tail_means),
        (3, "Kaplan-Meier correctness", c3_km_correctness),
        (4, "tabular equivalence without censoring", c4_tabular_equivalence),
        (5, "censoring-depth estimate consistency", c5_n_hat_consistency),
        (6, "observed process is not Markov", c6_markov_witness),
        (7, "uniform behavior ladder", c7_uniform_ladder),
        (8, "optimal behavior ladder", c8_optimal_ladder),
        (9, "cost of censoring", c9_cost_of_censoring),
        (10, "uncertainty quantifier coverage", c10_uq_coverage),
        (11, "end-to-end determinism", c11_determinism),
    ];
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, name, check) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let out = check();
        let status = if out.pass { "PASS" } else { "FAIL" };
        failed += usize::from(!out.pass);
        println!(
            "{status} criterion {id:>2} ({name}) [{:.1}s]: {}",
            start.elapsed().as_secs_f64(),
            out.detail
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
