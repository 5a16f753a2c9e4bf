//! Pipeline stages and the ladder experiment.

use std::fs;
use std::path::{Path, PathBuf};

use censored_fqi::data::{
    generate_dataset, load_dataset, plugin_optimal_policy, save_dataset, BehaviorPolicy,
    OfflineDataset,
};
use censored_fqi::env::{EnvConfig, Environment};
use censored_fqi::fqi::{load_policy, run_fqi, save_policy, FqiMode, PolicyArtifact, TrainReport};
use censored_fqi::oracle::{
    evaluate_artifact, evaluate_policy, regret_table, solve_censored_dp, solve_oracle_dp,
    EvalReport,
};
use censored_fqi::rng::derive_seed;
use censored_fqi::survival::{fit_survival, impute, load_augmented, save_augmented, ImputeReport};
use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{BehaviorKind, ExperimentConfig};
use crate::error::CliError;

const SEED_DATA: u64 = 0xDA7A;
const SEED_TRAIN: u64 = 0x7EA1;

/// Slack of the `a_max` guarantee: capacity minus the largest location the
/// demand can reach under `a_max`, with noise counted to three standard
/// deviations. Negative means `a_max` does not guarantee an uncensored next
/// period.
pub fn a_max_margin(env: &EnvConfig) -> f64 {
    let d = &env.demand;
    let covariates: f64 = d
        .theta_x
        .iter()
        .zip(env.features.coordinate_bounds())
        .map(|(t, b)| t.abs() * b)
        .sum();
    let worst = d.theta0 + covariates - d.beta * env.grid.price_max()
        + d.rho * d.d_max
        + 3.0 * d.noise_sd;
    env.y_cap - worst
}

/// Logs a warning when `a_max` does not guarantee the next period is
/// uncensored.
pub fn check_a_max(env: &EnvConfig) {
    let margin = a_max_margin(env);
    if margin < 0.0 {
        warn!(
            "a_max does not guarantee an uncensored next period: worst-case demand exceeds capacity by {:.2}",
            -margin
        );
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Output {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    fs::write(path, text + "\n").map_err(io_err(path))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Option<T> {
    let text = fs::read_to_string(path).ok()?;
    serde_json::from_str(&text).ok()
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config_hash: String,
    library_version: &'static str,
    env_fingerprint: String,
    started_at: String,
    finished_at: String,
    outputs: Vec<String>,
    config: &'a ExperimentConfig,
}

/// Writes `manifest[-suffix].json` into `dir`.
fn write_manifest(
    dir: &Path,
    command: &str,
    cfg: &ExperimentConfig,
    started: chrono::DateTime<chrono::Utc>,
    outputs: &[PathBuf],
) -> Result<PathBuf, CliError> {
    let name = if command == "experiment" {
        "manifest.json".to_string()
    } else {
        format!("manifest-{command}.json")
    };
    let path = dir.join(name);
    let manifest = Manifest {
        command,
        config_hash: cfg.hash(),
        library_version: censored_fqi::VERSION,
        env_fingerprint: cfg.env.fingerprint(),
        started_at: started.to_rfc3339(),
        finished_at: chrono::Utc::now().to_rfc3339(),
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
        config: cfg,
    };
    write_json(&path, &manifest)?;
    Ok(path)
}

fn environment(cfg: &ExperimentConfig) -> Result<Environment, CliError> {
    Environment::new(cfg.env.clone()).map_err(CliError::from)
}

/// Reference policies: the censoring-aware DP policy and the fully observed
/// oracle.
pub struct References {
    pub censored: PolicyArtifact,
    pub oracle: Option<PolicyArtifact>,
}

/// Solves (or loads from `out_dir/reference/<hash>/`) the reference
/// policies. The oracle is solved only when `with_oracle` is set.
pub fn references(
    cfg: &ExperimentConfig,
    env: &Environment,
    out_dir: &Path,
    with_oracle: bool,
) -> Result<References, CliError> {
    let dp = cfg.dp_config();
    let key = {
        let bytes = serde_json::to_vec(&(&cfg.env, &dp)).expect("reference key serializes");
        hex::encode(&Sha256::digest(&bytes)[..8])
    };
    let dir = out_dir.join("reference").join(key);
    let load = |name: &str| -> Option<PolicyArtifact> {
        let path = dir.join(name);
        let art = load_policy(&path).ok()?;
        art.check_compatible(&cfg.env).ok()?;
        Some(art)
    };
    let censored = match load("censored.json") {
        Some(a) => a,
        None => {
            info!("solving the censoring-aware reference");
            let (table, art) = solve_censored_dp(env, &dp).map_err(CliError::stage("reference"))?;
            info!("censored reference: {} sweeps over {} states", table.sweeps, table.states);
            fs::create_dir_all(&dir).map_err(io_err(&dir))?;
            save_policy(&art, dir.join("censored.json")).map_err(CliError::stage("reference"))?;
            art
        }
    };
    let oracle = if with_oracle {
        Some(match load("oracle.json") {
            Some(a) => a,
            None => {
                info!("solving the full-information oracle");
                let (table, art) = solve_oracle_dp(env, &dp).map_err(CliError::stage("reference"))?;
                info!("oracle: {} sweeps over {} states", table.sweeps, table.states);
                fs::create_dir_all(&dir).map_err(io_err(&dir))?;
                save_policy(&art, dir.join("oracle.json")).map_err(CliError::stage("reference"))?;
                art
            }
        })
    } else {
        None
    };
    Ok(References { censored, oracle })
}

fn behavior_policy(
    cfg: &ExperimentConfig,
    env: &Environment,
    out_dir: &Path,
) -> Result<BehaviorPolicy, CliError> {
    match cfg.data.behavior {
        BehaviorKind::Uniform => Ok(BehaviorPolicy::Uniform),
        BehaviorKind::EpsilonSafe => {
            BehaviorPolicy::epsilon_safe(cfg.data.epsilon).map_err(CliError::from)
        }
        BehaviorKind::Optimal => {
            let refs = references(cfg, env, out_dir, false)?;
            plugin_optimal_policy(refs.censored, &cfg.env).map_err(CliError::stage("generate"))
        }
    }
}

/// Episode count a stage command generates: the top of the ladder.
pub fn stage_episodes(cfg: &ExperimentConfig) -> usize {
    cfg.data.episodes.iter().copied().max().unwrap_or(1)
}

pub fn cmd_generate(cfg: &ExperimentConfig, output: &Path) -> Result<OfflineDataset, CliError> {
    let started = chrono::Utc::now();
    cfg.validate()?;
    check_a_max(&cfg.env);
    let env = environment(cfg)?;
    let out_dir = output.parent().unwrap_or(Path::new("."));
    let policy = behavior_policy(cfg, &env, out_dir)?;
    let ds = generate_dataset(&env, &policy, stage_episodes(cfg), cfg.data.horizon, cfg.data.seed)
        .map_err(CliError::stage("generate"))?;
    save_dataset(&ds, output).map_err(CliError::stage("generate"))?;
    write_manifest(out_dir, "generate", cfg, started, &[output.to_path_buf()])?;
    info!("wrote {} transitions to {}", ds.len(), output.display());
    Ok(ds)
}

pub fn cmd_impute(
    cfg: &ExperimentConfig,
    input: &Path,
    output: &Path,
) -> Result<ImputeReport, CliError> {
    let started = chrono::Utc::now();
    cfg.validate()?;
    let ds = load_dataset(input).map_err(CliError::stage("impute"))?;
    let model = fit_survival(&ds, &cfg.impute).map_err(CliError::stage("impute"))?;
    let (aug, report) =
        impute(&ds, &model, &ds.meta.env.costs).map_err(CliError::stage("impute"))?;
    save_augmented(&aug, output).map_err(CliError::stage("impute"))?;
    let out_dir = output.parent().unwrap_or(Path::new("."));
    write_manifest(out_dir, "impute", cfg, started, &[output.to_path_buf()])?;
    Ok(report)
}

pub fn cmd_train(
    cfg: &ExperimentConfig,
    input: &Path,
    mode: FqiMode,
    output: &Path,
) -> Result<TrainReport, CliError> {
    let started = chrono::Utc::now();
    cfg.validate()?;
    let aug = load_augmented(input).map_err(CliError::stage("train"))?;
    let (art, report) =
        run_fqi(&aug, &cfg.algo, mode, cfg.data.seed).map_err(CliError::stage("train"))?;
    save_policy(&art, output).map_err(CliError::stage("train"))?;
    let out_dir = output.parent().unwrap_or(Path::new("."));
    write_manifest(out_dir, "train", cfg, started, &[output.to_path_buf()])?;
    Ok(report)
}

pub fn cmd_evaluate(
    cfg: &ExperimentConfig,
    policy: &Path,
    output: &Path,
) -> Result<EvalReport, CliError> {
    let started = chrono::Utc::now();
    cfg.validate()?;
    let env = environment(cfg)?;
    let art = load_policy(policy).map_err(CliError::stage("evaluate"))?;
    let e = &cfg.eval;
    let report = evaluate_artifact(&art, &env, e.episodes, e.horizon, e.gamma, e.seed)
        .map_err(CliError::stage("evaluate"))?;
    write_json(output, &report)?;
    let out_dir = output.parent().unwrap_or(Path::new("."));
    write_manifest(out_dir, "evaluate", cfg, started, &[output.to_path_buf()])?;
    Ok(report)
}

/// Outcome of one (replicate, episode count, algorithm) cell, persisted so
/// that re-runs skip it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub config_hash: String,
    pub replicate: usize,
    pub n_episodes: usize,
    pub algo: String,
    pub outcome: CellOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CellOutcome {
    Ok {
        n_hat: usize,
        mean_return: f64,
        ci_half: f64,
        regret: f64,
        regret_ci_half: f64,
        oracle_regret: f64,
        oracle_regret_ci_half: f64,
        amax_events: usize,
        out_of_support: usize,
    },
    Failed {
        stage: String,
        message: String,
    },
}

/// One line of `results.csv`. Metrics are empty when the cell failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub algo: String,
    pub behavior: String,
    pub n_episodes: usize,
    pub replicate: usize,
    pub seed: u64,
    pub status: String,
    pub n_hat: Option<usize>,
    pub mean_return: Option<f64>,
    pub ci_half: Option<f64>,
    /// Shortfall against the censoring-aware reference.
    pub regret: Option<f64>,
    pub regret_ci_half: Option<f64>,
    /// Shortfall against the full-information oracle.
    pub oracle_regret: Option<f64>,
    pub oracle_regret_ci_half: Option<f64>,
    pub amax_events: Option<usize>,
    pub out_of_support: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRow {
    pub policy: String,
    pub mean_return: f64,
    pub ci_half: f64,
    pub sd: f64,
    pub eval_episodes: usize,
    pub truncation_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRow {
    pub algo: String,
    pub n_episodes: usize,
    pub replicate: usize,
    pub stage: String,
    pub message: String,
}

/// Paths and counts produced by [`cmd_experiment`].
#[derive(Debug, Clone)]
pub struct ExperimentSummary {
    pub results: PathBuf,
    pub references: PathBuf,
    pub failures: PathBuf,
    pub manifest: PathBuf,
    pub rows: Vec<ResultRow>,
    /// Cells computed in this run (the rest were loaded).
    pub computed: usize,
}

fn replicate_seed(cfg: &ExperimentConfig, r: usize) -> u64 {
    derive_seed(derive_seed(cfg.data.seed, SEED_DATA), r as u64)
}

fn cell_path(dir: &Path, r: usize, n: usize, mode: FqiMode) -> PathBuf {
    dir.join(format!("r{r:03}-n{n:04}-{}.json", mode.name()))
}

struct RefReports {
    censored: EvalReport,
    oracle: EvalReport,
}

fn run_cell(
    cfg: &ExperimentConfig,
    env: &Environment,
    full: &OfflineDataset,
    refs: &RefReports,
    r: usize,
    n: usize,
    mode: FqiMode,
) -> CellOutcome {
    let failed = |stage: &str, e: censored_fqi::Error| {
        let message = e.to_string();
        warn!("replicate {r}, {n} episodes, {}: stage `{stage}` failed: {message}", mode.name());
        CellOutcome::Failed {
            stage: stage.into(),
            message,
        }
    };
    let ds = full.prefix(n);
    let model = match fit_survival(&ds, &cfg.impute) {
        Ok(m) => m,
        Err(e) => return failed("impute", e),
    };
    let aug = match impute(&ds, &model, &cfg.env.costs) {
        Ok((a, _)) => a,
        Err(e) => return failed("impute", e),
    };
    let train_seed = derive_seed(derive_seed(cfg.data.seed, SEED_TRAIN), r as u64);
    let (art, report) = match run_fqi(&aug, &cfg.algo, mode, train_seed) {
        Ok(x) => x,
        Err(e) => return failed("train", e),
    };
    let e = &cfg.eval;
    let mut eval = match evaluate_artifact(&art, env, e.episodes, e.horizon, e.gamma, e.seed) {
        Ok(rep) => rep,
        Err(e) => return failed("evaluate", e),
    };
    eval.train_episodes = n;
    let regrets = regret_table(std::slice::from_ref(&eval), &refs.censored)
        .and_then(|c| regret_table(std::slice::from_ref(&eval), &refs.oracle).map(|o| (c, o)));
    let (c, o) = match regrets {
        Ok((c, o)) => (c[0].clone(), o[0].clone()),
        Err(e) => return failed("evaluate", e),
    };
    CellOutcome::Ok {
        n_hat: report.n_hat,
        mean_return: eval.mean_return,
        ci_half: eval.ci_half,
        regret: c.regret,
        regret_ci_half: c.regret_ci_half,
        oracle_regret: o.regret,
        oracle_regret_ci_half: o.regret_ci_half,
        amax_events: eval.amax_events,
        out_of_support: eval.out_of_support,
    }
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<(), CliError> {
    let out_err = |e: csv::Error| CliError::Output {
        path: path.to_path_buf(),
        reason: e.to_string(),
    };
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(out_err)?;
    w.write_record(header).map_err(out_err)?;
    for row in rows {
        w.serialize(row).map_err(out_err)?;
    }
    w.flush().map_err(io_err(path))
}

const RESULT_HEADER: [&str; 15] = [
    "algo",
    "behavior",
    "n_episodes",
    "replicate",
    "seed",
    "status",
    "n_hat",
    "mean_return",
    "ci_half",
    "regret",
    "regret_ci_half",
    "oracle_regret",
    "oracle_regret_ci_half",
    "amax_events",
    "out_of_support",
];

/// Runs the full ladder: for every replicate, episode count and algorithm,
/// generate → impute → train → evaluate. Cells already present under
/// `out_dir/cells/<config hash>/` are reused. `results.csv` is rebuilt in
/// (replicate, episode count, algorithm) order on every run.
pub fn cmd_experiment(cfg: &ExperimentConfig) -> Result<ExperimentSummary, CliError> {
    let started = chrono::Utc::now();
    cfg.validate()?;
    check_a_max(&cfg.env);
    let out_dir = cfg.output.out_dir.clone();
    fs::create_dir_all(&out_dir).map_err(io_err(&out_dir))?;
    let env = environment(cfg)?;
    let hash = cfg.hash();
    let cell_dir = out_dir.join("cells").join(&hash);
    fs::create_dir_all(&cell_dir).map_err(io_err(&cell_dir))?;

    let refs = references(cfg, &env, &out_dir, true)?;
    let oracle = refs.oracle.expect("oracle requested");
    let e = &cfg.eval;
    let eval_ref = |art: &PolicyArtifact| {
        evaluate_policy(art, &env, e.episodes, e.horizon, e.gamma, e.seed)
            .map_err(CliError::stage("reference"))
    };
    let ref_reports = RefReports {
        censored: eval_ref(&refs.censored)?,
        oracle: eval_ref(&oracle)?,
    };
    info!(
        "reference returns: censored {:.2} ± {:.2}, oracle {:.2} ± {:.2}",
        ref_reports.censored.mean_return,
        ref_reports.censored.ci_half,
        ref_reports.oracle.mean_return,
        ref_reports.oracle.ci_half
    );

    let mut ladder = cfg.data.episodes.clone();
    ladder.sort_unstable();
    ladder.dedup();
    let n_max = *ladder.last().expect("validated nonempty");
    let behavior = behavior_policy(cfg, &env, &out_dir)?;

    let per_replicate: Vec<Result<(Vec<CellRecord>, usize), CliError>> = (0..cfg.data.replicates)
        .into_par_iter()
        .map(|r| {
            let pending: Vec<(usize, FqiMode)> = ladder
                .iter()
                .flat_map(|&n| cfg.algos.iter().map(move |&m| (n, m)))
                .filter(|&(n, m)| {
                    read_json::<CellRecord>(&cell_path(&cell_dir, r, n, m))
                        .is_none_or(|c| c.config_hash != hash)
                })
                .collect();
            let mut computed = 0;
            if !pending.is_empty() {
                let seed = replicate_seed(cfg, r);
                let full = generate_dataset(&env, &behavior, n_max, cfg.data.horizon, seed);
                for (n, mode) in pending {
                    let outcome = match &full {
                        Ok(full) => run_cell(cfg, &env, full, &ref_reports, r, n, mode),
                        Err(e) => CellOutcome::Failed {
                            stage: "generate".into(),
                            message: e.to_string(),
                        },
                    };
                    let record = CellRecord {
                        config_hash: hash.clone(),
                        replicate: r,
                        n_episodes: n,
                        algo: mode.name().into(),
                        outcome,
                    };
                    write_json(&cell_path(&cell_dir, r, n, mode), &record)?;
                    computed += 1;
                }
                info!("replicate {r}: computed {computed} cells");
            }
            let records = ladder
                .iter()
                .flat_map(|&n| cfg.algos.iter().map(move |&m| (n, m)))
                .map(|(n, m)| {
                    let path = cell_path(&cell_dir, r, n, m);
                    read_json::<CellRecord>(&path).ok_or_else(|| CliError::Output {
                        path,
                        reason: "cell record missing after run".into(),
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok((records, computed))
        })
        .collect();

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let mut computed = 0;
    for (r, res) in per_replicate.into_iter().enumerate() {
        let (records, c) = res?;
        computed += c;
        for rec in records {
            let mut row = ResultRow {
                algo: rec.algo.clone(),
                behavior: cfg.data.behavior.name().into(),
                n_episodes: rec.n_episodes,
                replicate: r,
                seed: replicate_seed(cfg, r),
                status: "ok".into(),
                n_hat: None,
                mean_return: None,
                ci_half: None,
                regret: None,
                regret_ci_half: None,
                oracle_regret: None,
                oracle_regret_ci_half: None,
                amax_events: None,
                out_of_support: None,
            };
            match rec.outcome {
                CellOutcome::Ok {
                    n_hat,
                    mean_return,
                    ci_half,
                    regret,
                    regret_ci_half,
                    oracle_regret,
                    oracle_regret_ci_half,
                    amax_events,
                    out_of_support,
                } => {
                    row.n_hat = Some(n_hat);
                    row.mean_return = Some(mean_return);
                    row.ci_half = Some(ci_half);
                    row.regret = Some(regret);
                    row.regret_ci_half = Some(regret_ci_half);
                    row.oracle_regret = Some(oracle_regret);
                    row.oracle_regret_ci_half = Some(oracle_regret_ci_half);
                    row.amax_events = Some(amax_events);
                    row.out_of_support = Some(out_of_support);
                }
                CellOutcome::Failed { stage, message } => {
                    row.status = format!("failed:{stage}");
                    failures.push(FailureRow {
                        algo: rec.algo,
                        n_episodes: rec.n_episodes,
                        replicate: r,
                        stage,
                        message,
                    });
                }
            }
            rows.push(row);
        }
    }

    let results = out_dir.join("results.csv");
    write_csv(&results, &rows, &RESULT_HEADER)?;
    let ref_rows: Vec<ReferenceRow> = [
        ("censored_optimal", &ref_reports.censored),
        ("oracle", &ref_reports.oracle),
    ]
    .into_iter()
    .map(|(name, rep)| ReferenceRow {
        policy: name.into(),
        mean_return: rep.mean_return,
        ci_half: rep.ci_half,
        sd: rep.sd,
        eval_episodes: rep.eval_episodes,
        truncation_bound: rep.truncation_bound,
    })
    .collect();
    let references_path = out_dir.join("reference.csv");
    write_csv(
        &references_path,
        &ref_rows,
        &["policy", "mean_return", "ci_half", "sd", "eval_episodes", "truncation_bound"],
    )?;
    let failures_path = out_dir.join("failures.csv");
    write_csv(
        &failures_path,
        &failures,
        &["algo", "n_episodes", "replicate", "stage", "message"],
    )?;
    let manifest = write_manifest(
        &out_dir,
        "experiment",
        cfg,
        started,
        &[results.clone(), references_path.clone(), failures_path.clone()],
    )?;
    if !failures.is_empty() {
        let mut stages: Vec<String> = failures.iter().map(|f| f.stage.clone()).collect();
        stages.sort();
        stages.dedup();
        return Err(CliError::CellFailures {
            count: failures.len(),
            stages: stages.join(", "),
            failures: failures_path,
        });
    }
    Ok(ExperimentSummary {
        results,
        references: references_path,
        failures: failures_path,
        manifest,
        rows,
        computed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_violates_guarantee() {
        // 20.5 + 3 + 2 − 18 + 12.5 + 6 = 26 > 25
        let m = a_max_margin(&EnvConfig::default());
        assert!((m + 1.0).abs() < 1e-9, "{m}");
    }

    #[test]
    fn cell_paths_sort_in_run_order() {
        let d = Path::new("c");
        let a = cell_path(d, 1, 5, FqiMode::Cfqi);
        let b = cell_path(d, 1, 10, FqiMode::Cfqi);
        assert!(a < b);
    }
}
