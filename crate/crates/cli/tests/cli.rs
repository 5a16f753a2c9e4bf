use std::process::Command;

use cfqi_cli::config::ExperimentConfig;
use cfqi_cli::experiment::{cmd_evaluate, cmd_experiment, cmd_generate, cmd_impute, cmd_train};
use cfqi_cli::CommonArgs;
use censored_fqi::fqi::FqiMode;

fn quick_config(dir: &std::path::Path, episodes: usize, replicates: usize) -> ExperimentConfig {
    CommonArgs {
        episodes: Some(episodes),
        replicates: Some(replicates),
        out_dir: Some(dir.to_path_buf()),
        quick: true,
        ..CommonArgs::default()
    }
    .resolve()
    .unwrap()
}

#[test]
fn row_count_is_seeds_times_algos_times_levels() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(dir.path(), 5, 2);
    let summary = cmd_experiment(&cfg).unwrap();
    assert_eq!(summary.rows.len(), 2 * 3);
    let mut reader = csv::Reader::from_path(&summary.results).unwrap();
    assert_eq!(reader.records().count(), 6);
    assert!(summary.manifest.exists());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&summary.manifest).unwrap()).unwrap();
    assert_eq!(manifest["config_hash"], cfg.hash());
    assert_eq!(manifest["library_version"], censored_fqi::VERSION);
}

#[test]
fn rerun_reuses_cells_and_reproduces_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(dir.path(), 5, 1);
    let first = cmd_experiment(&cfg).unwrap();
    let bytes = std::fs::read(&first.results).unwrap();
    let second = cmd_experiment(&cfg).unwrap();
    assert_eq!(first.computed, 3);
    assert_eq!(second.computed, 0);
    assert_eq!(bytes, std::fs::read(&second.results).unwrap());
}

#[test]
fn stage_commands_chain() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(dir.path(), 10, 1);
    let data = dir.path().join("dataset.ndjson");
    let aug = dir.path().join("augmented.ndjson");
    let policy = dir.path().join("policy.json");
    let eval = dir.path().join("eval.json");
    let ds = cmd_generate(&cfg, &data).unwrap();
    assert_eq!(ds.n_traj, 10);
    let rep = cmd_impute(&cfg, &data, &aug).unwrap();
    assert!(rep.censored > 0);
    let tr = cmd_train(&cfg, &aug, FqiMode::Pcfqi, &policy).unwrap();
    assert!(tr.n_hat >= 1);
    let ev = cmd_evaluate(&cfg, &policy, &eval).unwrap();
    assert_eq!(ev.eval_episodes, 50);
    assert!(eval.exists());
    for stage in ["generate", "impute", "train", "evaluate"] {
        assert!(dir.path().join(format!("manifest-{stage}.json")).exists(), "{stage}");
    }
}

#[test]
fn invalid_gamma_exits_two_naming_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("bad.json");
    std::fs::write(&cfg_path, r#"{"eval": {"gamma": 1.2}}"#).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_cfqi"))
        .args(["experiment", "--config"])
        .arg(&cfg_path)
        .arg("--out-dir")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("eval.gamma"), "{stderr}");
}

#[test]
fn unknown_field_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("bad.json");
    std::fs::write(&cfg_path, r#"{"data": {"episode": [5]}}"#).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_cfqi"))
        .args(["generate", "--config"])
        .arg(&cfg_path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("data"));
}

#[test]
fn missing_input_exits_one_naming_stage() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_cfqi"))
        .args(["impute", "--input"])
        .arg(dir.path().join("absent.ndjson"))
        .arg("--out-dir")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("impute"));
}
