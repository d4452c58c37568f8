//! End-to-end tests of the `janet` binary: exit codes, determinism, and
//! the calibrate -> predict handoff.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn janet() -> Command {
    Command::new(env!("CARGO_BIN_EXE_janet"))
}

fn run(args: &[&str]) -> Output {
    janet().args(args).output().expect("binary runs")
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    janet()
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn simulate_series(dir: &Path, name: &str, length: usize, seed: u64) -> PathBuf {
    let path = dir.join(name);
    let out = run(&[
        "simulate",
        "--length",
        &length.to_string(),
        "--seed",
        &seed.to_string(),
        "--output",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    path
}

#[test]
fn simulate_is_seed_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = simulate_series(dir.path(), "a.csv", 100, 7);
    let b = simulate_series(dir.path(), "b.csv", 100, 7);
    let c = simulate_series(dir.path(), "c.csv", 100, 8);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&c).unwrap());
}

#[test]
fn simulate_env_seed_fallback() {
    let dir = tempfile::tempdir().unwrap();
    let flagged = simulate_series(dir.path(), "f.csv", 40, 123);
    let env_path = dir.path().join("e.csv");
    let out = janet()
        .env("JANET_SEED", "123")
        .args([
            "simulate",
            "--length",
            "40",
            "--output",
            env_path.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(
        std::fs::read(&flagged).unwrap(),
        std::fs::read(&env_path).unwrap()
    );
}

#[test]
fn simulate_usage_and_model_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.csv");
    // Zero length is a usage error (exit 1).
    let out = run(&["simulate", "--length", "0", "--output", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    // Non-stationary parameters are a model error (exit 2).
    let out = run(&[
        "simulate",
        "--length",
        "50",
        "--phi1",
        "2.0",
        "--phi2",
        "0.5",
        "--output",
        path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("non-stationary"));
}

#[test]
fn calibrate_then_predict_centers_match_recursion() {
    let dir = tempfile::tempdir().unwrap();
    let series = simulate_series(dir.path(), "s.csv", 120, 11);
    let bundle = dir.path().join("bundle.json");
    let out = run(&[
        "calibrate",
        "--input",
        series.to_str().unwrap(),
        "--epsilon",
        "0.2",
        "--k",
        "1",
        "--horizon",
        "4",
        "--output",
        bundle.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr_of(&out));

    let jpr = dir.path().join("jpr.csv");
    let out = run(&[
        "predict",
        "--bundle",
        bundle.to_str().unwrap(),
        "--input",
        series.to_str().unwrap(),
        "--output",
        jpr.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr_of(&out));

    // Region centers equal the AR recursion applied to the last T rows.
    let series = janet::series::read_csv(&series).unwrap();
    let text = std::fs::read_to_string(&bundle).unwrap();
    let parsed: serde_json::Value = serde_json::from_str(&text).unwrap();
    let coeffs: Vec<f64> = parsed["model"]["coefficients"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    let model = janet::forecast::ArModel::new(
        coeffs,
        parsed["model"]["intercept"].as_f64().unwrap(),
        parsed["model"]["innovation_sd"].as_f64().unwrap(),
    )
    .unwrap();
    let t = parsed["history_len"].as_u64().unwrap() as usize;
    let history = series
        .slice_rows(series.len() - t, series.len())
        .unwrap()
        .values()
        .clone();
    let want = janet::forecast::predict_iterated(&model, &history, 4).unwrap();

    let rows: Vec<Vec<f64>> = std::fs::read_to_string(&jpr)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').skip(2).map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 4);
    for (h, row) in rows.iter().enumerate() {
        let (lower, center, upper) = (row[0], row[1], row[2]);
        assert!((center - want[[h, 0]]).abs() < 1e-12);
        assert!(lower <= center && center <= upper);
    }
}

#[test]
fn calibrate_rejects_bad_flags() {
    let dir = tempfile::tempdir().unwrap();
    let series = simulate_series(dir.path(), "s.csv", 60, 5);
    let bundle = dir.path().join("b.json");
    let base = [
        "calibrate",
        "--input",
        series.to_str().unwrap(),
        "--output",
        bundle.to_str().unwrap(),
        "--horizon",
        "3",
    ];

    // epsilon at the boundary is a usage error.
    let mut args = base.to_vec();
    args.extend(["--epsilon", "0"]);
    let out = run(&args);
    assert_eq!(out.status.code(), Some(1));

    // A block size that does not divide the calibration length surfaces
    // the library error verbatim with exit 2.
    let mut args = base.to_vec();
    args.extend(["--epsilon", "0.2", "--block-size", "7"]);
    let out = run(&args);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("does not divide"));

    // Asymmetric epsilons must sum to epsilon.
    let mut args = base.to_vec();
    args.extend(["--epsilon", "0.2", "--sided", "asymmetric:0.15,0.1"]);
    let out = run(&args);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_of(&out).contains("sum to"));
}

#[test]
fn overflowing_quantile_serializes_inf_bounds() {
    let dir = tempfile::tempdir().unwrap();
    // Calibration of 8 rotations at eps = 0.1: floor(0.1 * 9) = 0, so the
    // region is unbounded.
    let series = simulate_series(dir.path(), "s.csv", 60, 9);
    let bundle = dir.path().join("b.json");
    let out = run(&[
        "calibrate",
        "--input",
        series.to_str().unwrap(),
        "--epsilon",
        "0.1",
        "--horizon",
        "2",
        "--train-length",
        "52",
        "--output",
        bundle.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    let jpr = dir.path().join("jpr.csv");
    let out = run(&[
        "predict",
        "--bundle",
        bundle.to_str().unwrap(),
        "--input",
        series.to_str().unwrap(),
        "--output",
        jpr.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    let text = std::fs::read_to_string(&jpr).unwrap();
    for line in text.lines().skip(1) {
        let cells: Vec<&str> = line.split(',').collect();
        assert_eq!(cells[2], "-inf");
        assert_eq!(cells[4], "inf");
    }
}

#[test]
fn evaluate_reports_coverage_and_rejects_unknown_method() {
    let dir = tempfile::tempdir().unwrap();
    let series = simulate_series(dir.path(), "s.csv", 140, 13);
    let results = dir.path().join("eval.csv");
    let out = run(&[
        "evaluate",
        "--method",
        "janet_star",
        "--input",
        series.to_str().unwrap(),
        "--window",
        "60",
        "--horizon",
        "4",
        "--epsilon",
        "0.2",
        "--seed",
        "1",
        "--output",
        results.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
    assert!(stdout.lines().any(|l| l.starts_with("coverage ")));
    let csv = std::fs::read_to_string(&results).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert!(csv.starts_with("method,epsilon,k,horizon,window,"));

    let out = run(&[
        "evaluate",
        "--method",
        "mystery",
        "--input",
        series.to_str().unwrap(),
        "--window",
        "60",
        "--horizon",
        "4",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr_of(&out);
    assert!(err.contains("janet_star") && err.contains("bonferroni"), "{err}");
}

#[test]
fn grid_outputs_are_byte_identical_across_workers() {
    let dir = tempfile::tempdir().unwrap();
    let detail = dir.path().join("detail.csv");
    let mut outputs = Vec::new();
    for (name, workers) in [("g1.csv", "1"), ("g2.csv", "1"), ("g4.csv", "4")] {
        let path = dir.path().join(name);
        let mut args = vec![
            "grid",
            "--preset",
            "paper-mc",
            "--n-sims",
            "2",
            "--seed",
            "5",
            "--workers",
            workers,
            "--output",
            path.to_str().unwrap(),
        ];
        if name == "g1.csv" {
            args.extend(["--per-sim-detail", detail.to_str().unwrap()]);
        }
        let out = run_in(dir.path(), &args);
        assert!(out.status.success(), "{}", stderr_of(&out));
        outputs.push(std::fs::read(&path).unwrap());
    }
    assert_eq!(outputs[0], outputs[1], "rerun differs");
    assert_eq!(outputs[0], outputs[2], "worker count changed the bytes");
    let text = String::from_utf8(outputs[0].clone()).unwrap();
    assert_eq!(text.lines().count(), 133, "132 grid rows plus header");
    assert!(dir.path().join("g1.manifest.json").exists());
    let detail_text = std::fs::read_to_string(&detail).unwrap();
    assert_eq!(detail_text.lines().count(), 132 * 2 + 1);

    let out = run_in(
        dir.path(),
        &["grid", "--preset", "nope", "--output", "x.csv"],
    );
    assert_eq!(out.status.code(), Some(1));
}
