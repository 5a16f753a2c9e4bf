use censored_fqi::censor::{estimate_n_hat, partition, preceding_runs};
use censored_fqi::data::{generate_dataset, BehaviorPolicy, OfflineDataset};
use censored_fqi::env::{EnvConfig, Environment};
use censored_fqi::survival::{fit_survival, impute, r_max_bound, SurvivalCurve};
use proptest::prelude::*;

fn dataset(cfg: EnvConfig, n_traj: usize, horizon: usize, seed: u64) -> OfflineDataset {
    let env = Environment::new(cfg).unwrap();
    generate_dataset(&env, &BehaviorPolicy::Uniform, n_traj, horizon, seed).unwrap()
}

/// Default market with the given censoring cap.
fn lean_env(n_true: Option<usize>) -> EnvConfig {
    EnvConfig {
        n_true,
        ..EnvConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn n_hat_grows_with_window_and_data(
        n_traj in 2usize..8,
        horizon in 3usize..30,
        seed in any::<u64>(),
        k in 1usize..30,
        m in 1usize..8,
    ) {
        let ds = dataset(lean_env(Some(3)), n_traj, horizon, seed);
        let k = k.min(horizon - 1);
        let small = estimate_n_hat(&ds, k).unwrap();
        let large = estimate_n_hat(&ds, k + 1).unwrap();
        prop_assert!(small <= large);
        prop_assert!(small <= k);
        let sub = ds.prefix(m.min(n_traj));
        prop_assert!(estimate_n_hat(&sub, k).unwrap() <= small);
        // the observed run lengths bound the estimate
        let longest = preceding_runs(&ds).into_iter().max().unwrap_or(0);
        let last_runs = ds.trajectories().map(|t| t.iter().rev().take_while(|tr| !tr.delta).count());
        let longest = last_runs.fold(longest, usize::max);
        prop_assert!(small <= longest);
    }

    #[test]
    fn partition_accounts_for_every_transition(
        n_traj in 1usize..6,
        horizon in 2usize..25,
        seed in any::<u64>(),
        cap in 0usize..4,
    ) {
        let ds = dataset(lean_env(Some(3)), n_traj, horizon, seed);
        let model = fit_survival(&ds, &Default::default()).unwrap();
        let (aug, _) = impute(&ds, &model, &ds.meta.env.costs).unwrap();
        let runs = preceding_runs(&ds);
        let longest = estimate_n_hat(&ds, horizon).unwrap();
        if longest > 0 {
            prop_assert!(partition(&aug, longest - 1).is_err());
        }
        let n_hat = longest.max(cap);
        let part = partition(&aug, n_hat).unwrap();
        prop_assert_eq!(part.total() + part.discarded, ds.len());
        prop_assert_eq!(part.buckets.len(), n_hat + 1);
        for (depth, bucket) in part.buckets.iter().enumerate() {
            for rec in bucket {
                prop_assert_eq!(rec.block.depth(), depth);
                prop_assert_eq!(runs[rec.index], depth);
                prop_assert_eq!(rec.r_star, aug.r_star[rec.index]);
            }
        }
    }

    #[test]
    fn survival_curve_is_a_survival_function(
        obs in prop::collection::vec((0u8..30, any::<bool>()), 1..60),
        probes in prop::collection::vec(-2.0f64..35.0, 1..20),
    ) {
        let obs: Vec<(f64, bool)> = obs.into_iter().map(|(t, e)| (t as f64, e)).collect();
        let curve = SurvivalCurve::kaplan_meier(&obs);
        let mut probes = probes;
        probes.sort_by(f64::total_cmp);
        let mut last = 1.0;
        for c in probes {
            if let Some(s) = curve.survival(c) {
                prop_assert!((0.0..=1.0).contains(&s));
                prop_assert!(s <= last + 1e-12);
                last = s;
            }
        }
    }

    #[test]
    fn imputed_rewards_are_bounded(
        n_traj in 1usize..6,
        horizon in 2usize..30,
        seed in any::<u64>(),
    ) {
        let ds = dataset(lean_env(Some(3)), n_traj, horizon, seed);
        let cfg = &ds.meta.env;
        let model = fit_survival(&ds, &Default::default()).unwrap();
        let (aug, report) = impute(&ds, &model, &cfg.costs).unwrap();
        let r_max = r_max_bound(cfg);
        let c = cfg.costs;
        let d_max = cfg.demand.d_max;
        let mut censored = 0;
        for (tr, &r) in ds.transitions.iter().zip(&aug.r_star) {
            prop_assert!(r.abs() <= r_max);
            match tr.r_obs {
                Some(obs) => prop_assert_eq!(r, obs),
                None => {
                    censored += 1;
                    // the imputed demand lies between the inventory and the ceiling
                    let base = tr.a.p * tr.z - c.c2 * tr.a.o;
                    prop_assert!(r <= base + 1e-9);
                    prop_assert!(r >= base - c.c1 * (d_max - tr.w.y) - 1e-9);
                }
            }
        }
        prop_assert_eq!(report.censored, censored);
    }

    #[test]
    fn imputation_is_identity_without_censoring(
        n_traj in 1usize..5,
        horizon in 2usize..20,
        seed in any::<u64>(),
    ) {
        // a zero-length censoring cap redraws every stockout
        let ds = dataset(lean_env(Some(0)), n_traj, horizon, seed);
        prop_assert!(ds.transitions.iter().all(|tr| tr.delta));
        let model = fit_survival(&ds, &Default::default()).unwrap();
        let (aug, report) = impute(&ds, &model, &ds.meta.env.costs).unwrap();
        prop_assert_eq!(report.censored, 0);
        let observed: Vec<f64> = ds.transitions.iter().map(|tr| tr.r_obs.unwrap()).collect();
        prop_assert_eq!(aug.r_star, observed);
    }
}
