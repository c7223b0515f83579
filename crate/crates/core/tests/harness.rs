use std::fs;
use std::process::Command;

use inca_lab::harness::{run_experiment, to_csv, ExperimentConfig, ExperimentKind, CSV_HEADER};

fn small_success() -> ExperimentConfig {
    ExperimentConfig::from_json(r#"{"experiment":"success_rate","n":[30],"k":[1,2],"T":[2,6],"trials":6,"seed":5}"#).unwrap()
}

#[test]
fn same_seed_same_bytes() {
    let cfg = small_success();
    let a = to_csv(&run_experiment(&cfg).unwrap());
    let b = to_csv(&run_experiment(&cfg).unwrap());
    assert_eq!(a, b);
    assert_eq!(a.lines().next().unwrap(), CSV_HEADER);
    assert_eq!(CSV_HEADER, "experiment,method,n,k,T,epsilon,delta,rho,gamma,gamma2,alpha,metric,value,trials,seed");
    let other = ExperimentConfig { seed: 6, ..cfg };
    assert_ne!(a, to_csv(&run_experiment(&other).unwrap()));
}

#[test]
fn every_experiment_runs_small() {
    let docs = [
        r#"{"experiment":"accuracy_vs_collusion","n":[64],"rho":[0.0,0.5]}"#,
        r#"{"experiment":"min_iterations","n":[40],"T":[8],"trials":3}"#,
        r#"{"experiment":"dropout_mse","n":[40],"T":[4],"gamma":[0.1],"gopa_k":4,"trials":3}"#,
    ];
    for doc in docs {
        let rows = run_experiment(&ExperimentConfig::from_json(doc).unwrap()).unwrap();
        assert!(!rows.is_empty());
        assert!(to_csv(&rows).lines().skip(1).all(|l| l.split(',').count() == 15));
    }
}

#[test]
fn bad_grids_are_rejected() {
    for doc in [
        r#"{"experiment":"success_rate","n":[]}"#,
        r#"{"experiment":"success_rate","T":[]}"#,
        r#"{"experiment":"success_rate","trials":0}"#,
        r#"{"experiment":"success_rate","epsilon":[1.5]}"#,
        r#"{"experiment":"success_rate","colour":"blue"}"#,
    ] {
        assert!(ExperimentConfig::from_json(doc).is_err(), "{doc}");
    }
    let mut cfg = ExperimentConfig::defaults(ExperimentKind::SuccessRate);
    cfg.k.clear();
    assert!(run_experiment(&cfg).is_err());
}

fn inca(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_inca")).args(args).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stdout).into_owned())
}

#[test]
fn cli_exit_codes_and_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();

    let (code, _) = inca(&["calibrate", "--n", "20", "--k", "2", "-T", "6", "--epsilon", "0.5", "--out", d]);
    assert_eq!(code, 0);
    let cal: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("calibration.json")).unwrap()).unwrap();
    assert_eq!(cal["ok"], true);

    let (code, stdout) = inca(&["simulate", "--n", "8", "-T", "3", "--seed", "4"]);
    assert_eq!(code, 0);
    let tr: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(tr["messages"].as_array().unwrap().len(), 4);

    let blind = dir.path().join("blind.json");
    fs::write(&blind, r#"{"n":10,"T":2,"mode":"eavesdrop","observe_fraction":1.0}"#).unwrap();
    assert_eq!(inca(&["rank-check", "--config", blind.to_str().unwrap()]).0, 3);
    assert_eq!(inca(&["calibrate", "--config", blind.to_str().unwrap()]).0, 3);

    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"n":10,"colour":"blue"}"#).unwrap();
    assert_eq!(inca(&["calibrate", "--config", bad.to_str().unwrap()]).0, 2);
    assert_eq!(inca(&["calibrate", "--n", "1"]).0, 2);
    assert_eq!(inca(&["experiment", "no_such_thing"]).0, 2);

    let exp = dir.path().join("exp.json");
    fs::write(&exp, r#"{"experiment":"accuracy_vs_collusion","n":[64],"rho":[0.0,0.5]}"#).unwrap();
    let sub = dir.path().join("acc");
    let (code, _) = inca(&["experiment", "accuracy_vs_collusion", "--config", exp.to_str().unwrap(), "--format", "json", "--out", sub.to_str().unwrap()]);
    assert_eq!(code, 0);
    let rows: serde_json::Value = serde_json::from_str(&fs::read_to_string(sub.join("results.json")).unwrap()).unwrap();
    assert!(!rows.as_array().unwrap().is_empty());

    let (code, stdout) = inca(&["baseline", "muffliato", "--n", "1024", "--epsilon", "0.1"]);
    assert_eq!(code, 0);
    assert!(stdout.starts_with(CSV_HEADER));
}

#[test]
fn collusion_raises_min_iterations() {
    let doc = |rho: f64| format!(r#"{{"experiment":"min_iterations","n":[100],"rho":[{rho}],"T":[20],"trials":50,"seed":3}}"#);
    let min_t = |rho: f64| {
        let rows = run_experiment(&ExperimentConfig::from_json(&doc(rho)).unwrap()).unwrap();
        rows.iter().find(|r| r.metric == "min_T").unwrap().value
    };
    let (free, half) = (min_t(0.0), min_t(0.5));
    assert!(free < half, "min_T {free} at ρ=0 vs {half} at ρ=0.5");
}
