use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use spikelab::ingest::{load_spot_csv, IngestRules};

const STUDY_MODEL: &str = "\
# reference estimation model
lambda = 10
beta = 200
jump.kind = mixture
jump.weights = 0.4, 0.6
jump.means = 15, 10
jump.signs = -1, 1
cont.kind = exp-ou
cont.reversion = 100
cont.vol = 2
cont.initial = 1
grid.n = 10000
grid.horizon = 1
";

const STRIP_MODEL: &str = "\
lambda = 35
beta = 21042
jump.kind = mixture
jump.weights = 0.3, 0.7
jump.means = 30, 300
jump.signs = -1, 1
cont.kind = two-factor
cont.level = 40
grid.n = 48
grid.horizon = 0.005479452054794521
";

fn spikelab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spikelab"))
        .args(args)
        .env("SPIKELAB_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn json_stdout(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn simulate(dir: &Path, seed: u64, rep: u64) -> PathBuf {
    let config = write(dir, "model.cfg", STUDY_MODEL);
    let out = dir.join(format!("path_{seed}_{rep}.csv"));
    let result = spikelab(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--seed",
        &seed.to_string(),
        "--replication",
        &rep.to_string(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(result.status.success(), "stderr: {}", String::from_utf8_lossy(&result.stderr));
    out
}

#[test]
fn help_exits_zero() {
    let out = spikelab(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    for sub in ["simulate", "detect", "estimate", "price-forward", "price-strip", "study-estimation", "study-pricing"] {
        assert!(text.contains(sub), "help lacks {sub}");
    }
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(spikelab(&["estimate", "--bogus"]).status.code(), Some(2));
    assert_eq!(spikelab(&[]).status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_one_and_name_the_file() {
    let out = spikelab(&["estimate", "--in", "/nonexistent/prices.csv"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error:") && err.contains("/nonexistent/prices.csv"), "{err}");
}

#[test]
fn bad_config_key_is_reported_with_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "bad.cfg", "lambda = 10\nbetta = 200\n");
    let out = spikelab(&["price-forward", "--config", config.to_str().unwrap(), "--t", "0", "--T", "0.1"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("betta") && err.contains('2'), "{err}");
}

#[test]
fn simulated_csv_round_trips_through_ingest() {
    let dir = tempfile::tempdir().unwrap();
    let out = simulate(dir.path(), 7, 0);
    let (path, report) = load_spot_csv(&out, &IngestRules::default()).unwrap();
    assert_eq!(path.grid().n(), 10_000);
    assert!(report.filled.is_empty());
    let mut reader = csv::Reader::from_path(&out).unwrap();
    let column = reader.headers().unwrap().iter().position(|h| h == "X").unwrap();
    let written: Vec<f64> = reader.records().map(|r| r.unwrap()[column].parse().unwrap()).collect();
    assert_eq!(written.len(), path.values().len());
    for (a, b) in written.iter().zip(path.values()) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
    let truth = out.with_extension("truth.csv");
    assert!(truth.exists(), "missing {}", truth.display());
}

#[test]
fn simulation_is_reproducible_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "model.cfg", STUDY_MODEL);
    let run = |threads: &str, name: &str| {
        let out = dir.path().join(name);
        let result = Command::new(env!("CARGO_BIN_EXE_spikelab"))
            .args(["simulate", "--config", config.to_str().unwrap(), "--seed", "3", "--out", out.to_str().unwrap()])
            .env("SPIKELAB_THREADS", threads)
            .output()
            .unwrap();
        assert!(result.status.success());
        std::fs::read(out).unwrap()
    };
    assert_eq!(run("1", "a.csv"), run("4", "b.csv"));
}

#[test]
fn estimate_recovers_reference_parameters() {
    // Averages over a handful of paths at (10, 200) with sign filtering.
    let dir = tempfile::tempdir().unwrap();
    let (mut lambdas, mut betas) = (Vec::new(), Vec::new());
    for rep in 0..8 {
        let path = simulate(dir.path(), 11, rep);
        let value = json_stdout(&spikelab(&["--json", "estimate", "--in", path.to_str().unwrap()]));
        assert_eq!(value["mode"], "SignFiltered");
        lambdas.push(value["lambda_hat"].as_f64().unwrap());
        betas.push(value["beta_hat"].as_f64().unwrap());
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert!((mean(&lambdas) - 10.0).abs() < 3.0, "{lambdas:?}");
    assert!((mean(&betas) - 200.0).abs() < 40.0, "{betas:?}");
}

#[test]
fn detect_writes_flags_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let path = simulate(dir.path(), 5, 1);
    let flags = dir.path().join("flags.csv");
    let value = json_stdout(&spikelab(&[
        "--json",
        "detect",
        "--in",
        path.to_str().unwrap(),
        "--mode",
        "plain",
        "--flags-out",
        flags.to_str().unwrap(),
    ]));
    let count = value["count"].as_u64().unwrap() as usize;
    let rows = csv::Reader::from_path(&flags).unwrap().records().count();
    assert_eq!(rows, count);
    assert!(value["sigma_hat"].as_f64().unwrap() > 0.0);
}

#[test]
fn price_forward_matches_the_library() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "model.cfg", STUDY_MODEL);
    let value = json_stdout(&spikelab(&[
        "--json",
        "price-forward",
        "--config",
        config.to_str().unwrap(),
        "--t",
        "0",
        "--T",
        "0.01",
        "--z-now",
        "3",
    ]));
    let law = spikelab::experiments::study_jump_law();
    let params = spikelab::model::SpikeParams::new(10.0, 200.0, law).unwrap();
    let expected = spikelab::pricing::forward_spike_arith(3.0, &params, 0.0, 0.01).unwrap();
    assert!((value["forward"].as_f64().unwrap() - expected).abs() <= 1e-12 * expected.abs().max(1.0));
}

#[test]
fn price_strip_reports_an_interval() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "strip.cfg", STRIP_MODEL);
    let value = json_stdout(&spikelab(&[
        "--json",
        "price-strip",
        "--config",
        config.to_str().unwrap(),
        "--strike",
        "45",
        "--sims",
        "400",
        "--seed",
        "2",
    ]));
    let estimate = value["estimate"].as_f64().unwrap();
    let ci = value["ci95"].as_array().unwrap();
    let (lo, hi) = (ci[0].as_f64().unwrap(), ci[1].as_f64().unwrap());
    assert!(lo <= estimate && estimate <= hi);
    assert!(value["stderr"].as_f64().unwrap() >= 0.0);
    assert_eq!(value["sims"].as_u64(), Some(400));
}

#[test]
fn estimation_study_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("study");
    let value = json_stdout(&spikelab(&[
        "--json",
        "study-estimation",
        "--reps",
        "4",
        "--pairs",
        "10:200",
        "--seed",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]));
    assert_eq!(value["rows"].as_array().unwrap().len(), 2);
    assert!(out.join("rows.csv").exists() && out.join("summary.json").exists());
}
