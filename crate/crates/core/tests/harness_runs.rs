use std::collections::HashSet;
use std::fs;
use std::path::PathBuf;

use kronfeat::harness::config::{ExperimentConfig, ExperimentKind};
use kronfeat::harness::{self, RunOutcome};

fn configs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn small_headtohead() -> ExperimentConfig {
    ExperimentConfig::from_json(
        r#"{
            "experiment": "headtohead",
            "trials": 3,
            "base_seed": 5,
            "iterations": 12,
            "instance": {
                "dx": 12, "dy": 5, "k": 3,
                "cov_train": {"kind": "high_aniso", "decades": 2.0},
                "cov_test": {"kind": "low_aniso"},
                "noise_train": 0.1, "noise_test": 1.0,
                "family": "rademacher",
                "batch_size": 64, "n_test": 64, "eval_every": 4
            },
            "methods": [
                {"method": "kfac", "lr": 0.5},
                {"method": "amgd", "lr": 0.01},
                {"method": "sgd", "lr": 1e30}
            ]
        }"#,
    )
    .unwrap()
}

#[test]
fn every_preset_parses_and_every_experiment_has_one() {
    let mut kinds = HashSet::new();
    for entry in fs::read_dir(configs_dir()).unwrap() {
        let path = entry.unwrap().path();
        let cfg = ExperimentConfig::from_path(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        kinds.insert(cfg.experiment);
    }
    for kind in ExperimentKind::ALL {
        assert!(kinds.contains(&kind), "no preset for {kind}");
    }
}

#[test]
fn outputs_are_byte_deterministic() {
    let cfg = small_headtohead();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    harness::write_outputs(&harness::run(&cfg).unwrap(), a.path(), true).unwrap();
    harness::write_outputs(&harness::run(&cfg).unwrap(), b.path(), true).unwrap();
    for file in ["kfac/trace.csv", "amgd/trace.csv", "sgd/trace.csv", "summary.csv", "subspace_dist.svg"] {
        let x = fs::read(a.path().join(file)).unwrap();
        let y = fs::read(b.path().join(file)).unwrap();
        assert_eq!(x, y, "{file} differs between runs");
    }
}

#[test]
fn trace_layout_and_divergence_marking() {
    let cfg = small_headtohead();
    let dir = tempfile::tempdir().unwrap();
    harness::write_outputs(&harness::run(&cfg).unwrap(), dir.path(), false).unwrap();
    let trace = fs::read_to_string(dir.path().join("kfac/trace.csv")).unwrap();
    let lines: Vec<&str> = trace.lines().collect();
    assert_eq!(lines[0], "iter,train_loss,subspace_dist,transfer_loss,diverged");
    let iters: Vec<&str> = lines[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(iters, ["0", "4", "8", "12"]);
    // the head overflows within a few steps at this rate
    let sgd = fs::read_to_string(dir.path().join("sgd/trace.csv")).unwrap();
    let last: Vec<&str> = sgd.lines().last().unwrap().split(',').collect();
    assert_eq!(last[2], "1.0");
    assert_eq!(last[4], "3");
    assert!(!dir.path().join("train_loss.svg").exists());
}

#[test]
fn manifest_echoes_config_and_seed() {
    let mut cfg = small_headtohead();
    cfg.base_seed = 17;
    let dir = tempfile::tempdir().unwrap();
    let record = harness::run(&cfg).unwrap();
    harness::write_outputs(&record, dir.path(), false).unwrap();
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["base_seed"], 17);
    assert_eq!(manifest["experiment"], "headtohead");
    assert_eq!(manifest["config_sha256"].as_str().unwrap(), record.config_hash);
    let echoed: ExperimentConfig = serde_json::from_value(manifest["config"].clone()).unwrap();
    assert_eq!(echoed, cfg);
    assert!(manifest["files"].as_array().unwrap().iter().any(|f| f == "kfac/trace.csv"));
}

#[test]
fn seed_changes_results() {
    let cfg = small_headtohead();
    let mut other = cfg.clone();
    other.base_seed += 1;
    let a = harness::run(&cfg).unwrap();
    let b = harness::run(&other).unwrap();
    assert_ne!(a.summary.to_csv().unwrap(), b.summary.to_csv().unwrap());
}

#[test]
fn trials_are_independent_of_trial_count() {
    // trial i uses the same derived seed whatever the total
    let mut one = small_headtohead();
    one.trials = 1;
    let three = small_headtohead();
    let (RunOutcome::Traces(a), RunOutcome::Traces(b)) = (harness::run(&one).unwrap().outcome, harness::run(&three).unwrap().outcome) else {
        panic!("expected traces")
    };
    let first_a = &a.get("kfac").unwrap().trials[0];
    let first_b = &b.get("kfac").unwrap().trials[0];
    assert_eq!(format!("{first_a:?}"), format!("{first_b:?}"));
}

#[test]
fn lr_sweep_grid_and_divergence_cap() {
    let cfg = ExperimentConfig::from_json(
        r#"{
            "experiment": "lr_sweep", "trials": 2, "iterations": 60,
            "instance": {
                "dx": 10, "dy": 4, "k": 2,
                "cov_train": {"kind": "identity"}, "cov_test": {"kind": "identity"},
                "noise_train": 0.0, "noise_test": 0.0, "family": "gaussian",
                "batch_size": 40, "n_test": 40
            },
            "methods": [{"method": "sgd"}, {"method": "dfw"}],
            "lr_grid": {"log10_min": -2.0, "log10_max": 6.0, "step": 4.0}
        }"#,
    )
    .unwrap();
    let RunOutcome::LrSweep(rows) = harness::run(&cfg).unwrap().outcome else { panic!("expected sweep rows") };
    assert_eq!(rows.len(), 6);
    for r in &rows {
        assert!((0.0..=1.0).contains(&r.subspace_dist));
        if r.diverged > 0 && r.diverged == r.trials {
            assert_eq!(r.subspace_dist, 1.0);
        }
    }
    let sgd_huge = rows.iter().find(|r| r.method == "sgd" && r.lr > 1e5).unwrap();
    assert_eq!(sgd_huge.diverged, 2);
}

#[test]
fn lower_bound_rows_hold() {
    let cfg = ExperimentConfig::from_json(
        r#"{"experiment": "lower_bound", "trials": 1,
            "lower_bound": {"lambdas": [0.05, 0.2], "eps0": 0.2, "horizon": 30}}"#,
    )
    .unwrap();
    let RunOutcome::LowerBound(rows) = harness::run(&cfg).unwrap().outcome else { panic!("expected lower-bound rows") };
    assert_eq!(rows.len(), 2 * 5 * 31);
    assert!(rows.iter().all(|r| r.holds()));
}

#[test]
fn single_index_rows_carry_theory() {
    let cfg = ExperimentConfig::from_json(
        r#"{"experiment": "single_index_epsilon", "trials": 2,
            "single_index": {"dx": 40, "n": 400, "n_hidden": 30, "epsilons": [0.0, 0.6], "lambdas": [0.5]}}"#,
    )
    .unwrap();
    let record = harness::run(&cfg).unwrap();
    let RunOutcome::SingleIndex(rows) = &record.outcome else { panic!("expected alignment rows") };
    assert_eq!(rows.len(), 2);
    for r in rows {
        assert!(r.theory_sgd > 0.0 && r.theory_sgd < 1.0);
        assert!(r.theory_kfac.is_some_and(|t| t > 0.0 && t < 1.0), "{:?}", r.theory_error);
        assert!(r.sim_sgd.abs() <= 1.0 && r.sim_kfac.abs() <= 1.0);
    }
    let csv = String::from_utf8(record.summary.to_csv().unwrap()).unwrap();
    assert!(csv.lines().next().unwrap().contains("theory_kfac"));
}

#[test]
fn multitask_runs_both_methods() {
    let cfg = ExperimentConfig::from_json(
        r#"{
            "experiment": "multitask", "trials": 2, "iterations": 6, "tasks": 3,
            "instance": {
                "dx": 12, "dy": 5, "k": 3,
                "cov_train": {"kind": "identity"}, "cov_test": {"kind": "identity"},
                "noise_train": 0.0, "noise_test": 0.1, "family": "gaussian",
                "batch_size": 64, "n_test": 64, "eval_every": 3
            },
            "methods": [{"method": "kfac", "lr": 0.9}, {"method": "sgd", "lr": 0.05}]
        }"#,
    )
    .unwrap();
    let RunOutcome::Traces(res) = harness::run(&cfg).unwrap().outcome else { panic!("expected traces") };
    let kfac = res.get("kfac").unwrap();
    assert_eq!(kfac.mean.len(), 3);
    assert!(kfac.last().subspace_dist < kfac.mean[0].subspace_dist);
    assert!(res.get("sgd").is_some());
}

#[test]
fn config_errors_are_reported() {
    let bad = [
        r#"{"experiment": "headtohead"}"#,
        r#"{"experiment": "nope"}"#,
        r#"{"experiment": "lower_bound", "lower_bound": {"lambdas": [0.1], "eps0": 0.1, "horizon": 3}, "extra": 1}"#,
        r#"{"experiment": "lower_bound", "trials": 0, "lower_bound": {"lambdas": [0.1], "eps0": 0.1, "horizon": 3}}"#,
    ];
    for text in bad {
        assert!(ExperimentConfig::from_json(text).is_err(), "accepted {text}");
    }
}
