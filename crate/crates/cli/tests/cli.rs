//! End-to-end tests of the `lrdcp` binary: exit codes, JSON shapes,
//! atomic CSV artifacts, and byte-identical replays.

use std::path::Path;
use std::process::{Command, Output};

fn run_env(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_lrdcp"));
    cmd.args(args);
    for (key, value) in envs {
        cmd.env(key, value);
    }
    cmd.output().expect("binary runs")
}

fn run(args: &[&str]) -> Output {
    run_env(args, &[])
}

fn stdout_json(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stdout);
    serde_json::from_str(&text).unwrap_or_else(|e| panic!("stdout is JSON ({e}):\n{text}"))
}

fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

#[test]
fn simulate_writes_csv_and_replays_byte_identically() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let c = dir.path().join("c.csv");

    let out = run(&[
        "simulate", "--model", "fgn", "--hurst", "0.7", "--n", "64", "--seed", "42", "--out",
        path_str(&a),
    ]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let json = stdout_json(&out);
    assert_eq!(json["seed"], 42);
    assert_eq!(json["rows"], 64);

    let text = std::fs::read_to_string(&a).unwrap();
    let values: Vec<f64> = text.lines().map(|l| l.parse().unwrap()).collect();
    assert_eq!(values.len(), 64);
    assert!(values.iter().all(|v| v.is_finite()));

    run(&[
        "simulate", "--model", "fgn", "--hurst", "0.7", "--n", "64", "--seed", "42", "--out",
        path_str(&b),
    ]);
    assert_eq!(
        std::fs::read(&a).unwrap(),
        std::fs::read(&b).unwrap(),
        "same seed must replay byte-identically"
    );

    run(&[
        "simulate", "--model", "fgn", "--hurst", "0.7", "--n", "64", "--seed", "43", "--out",
        path_str(&c),
    ]);
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&c).unwrap());
}

#[test]
fn simulate_names_the_missing_parameter() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "simulate", "--model", "fgn", "--n", "16", "--seed", "1", "--out",
        path_str(&dir.path().join("x.csv")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("--hurst"), "stderr: {err}");
}

#[test]
fn test_subcommand_emits_a_full_report() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    let table = dir.path().join("cvtable.json");
    run(&[
        "simulate", "--model", "fgn", "--hurst", "0.7", "--n", "200", "--seed", "7", "--out",
        path_str(&data),
    ]);
    let out = run(&[
        "test", "--input", path_str(&data), "--stat", "cvm", "--alpha", "0.05", "--hurst",
        "0.7", "--calib", "mc", "--table", path_str(&table), "--table-reps", "200", "--seed",
        "9",
    ]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let json = stdout_json(&out);
    assert_eq!(json["kind"], "cvm");
    assert_eq!(json["n"], 200);
    assert_eq!(json["alpha"], 0.05);
    assert_eq!(json["mode"], "known_hurst");
    assert_eq!(json["hurst_used"], 0.7);
    assert!(json["raw_value"].as_f64().unwrap() > 0.0);
    assert!(json["normalized_value"].as_f64().is_some());
    assert!(json["critical_value"].as_f64().unwrap() > 0.0);
    assert!(json["table_value"].as_f64().unwrap() > 0.0);
    assert!(json["reject"].is_boolean());
    assert!(json["k_hat"].as_u64().unwrap() > 0);
    assert!(json["normalization"]["value"].as_f64().unwrap() > 1.0);
    assert!(table.exists(), "table is persisted next to the run");

    // The decision on the normalized scale must equal raw vs raw-table.
    let raw = json["raw_value"].as_f64().unwrap();
    let q_raw = json["table_value"].as_f64().unwrap();
    assert_eq!(json["reject"].as_bool().unwrap(), raw > q_raw);
}

#[test]
fn estimated_hurst_test_reports_the_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    run(&[
        "simulate", "--model", "fgn", "--hurst", "0.8", "--n", "300", "--seed", "21", "--out",
        path_str(&data),
    ]);
    let out = run(&[
        "test", "--input", path_str(&data), "--stat", "wilcoxon", "--estimate-hurst",
        "whittle", "--table-reps", "150", "--seed", "3",
    ]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let json = stdout_json(&out);
    assert_eq!(json["mode"], "estimated_hurst");
    let h = json["hurst_estimate"]["value"].as_f64().unwrap();
    assert!(h > 0.5 && h < 1.0, "estimate {h}");
    assert_eq!(json["hurst_used"], json["hurst_estimate"]["value"]);
    assert!(json["C_hat"].as_f64().unwrap() > 0.0);
}

#[test]
fn malformed_csv_reports_the_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("bad.csv");
    std::fs::write(&data, "1.0\nabc\n2.0\n").unwrap();
    let out = run(&["test", "--input", path_str(&data), "--stat", "ks", "--hurst", "0.7"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2"), "stderr: {err}");
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = run(&["test", "--nonsense"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn domain_error_names_the_precondition() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    run(&[
        "simulate", "--model", "fgn", "--hurst", "0.7", "--n", "64", "--seed", "5", "--out",
        path_str(&data),
    ]);
    let out = run(&[
        "test", "--input", path_str(&data), "--stat", "cvm", "--hurst", "1.3", "--table-reps",
        "100",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("H in (0.5, 1)"), "stderr: {err}");
}

#[test]
fn hermite_matches_the_closed_form() {
    let out = run(&["hermite", "--transform", "square", "--q", "2", "--x", "1.0"]);
    assert!(out.status.success());
    let json = stdout_json(&out);
    assert_eq!(json["q"], 2);
    assert_eq!(json["x"], 1.0);
    assert_eq!(json["method"], "gauss_legendre");
    // -2 sqrt(1) phi(1)
    let expected = -2.0 * (-0.5f64).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let got = json["value"].as_f64().unwrap();
    assert!((got - expected).abs() < 1e-6, "got {got}, expected {expected}");
}

#[test]
fn estimate_reports_hurst_and_scale() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    run(&[
        "simulate", "--model", "fgn", "--hurst", "0.7", "--n", "512", "--seed", "13", "--out",
        path_str(&data),
    ]);
    let out = run(&[
        "estimate", "--input", path_str(&data), "--method", "whittle", "--K", "5",
    ]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let json = stdout_json(&out);
    let h = json["hurst"]["value"].as_f64().unwrap();
    assert!(h > 0.5 && h < 1.0, "estimate {h}");
    assert!(json["scale"]["C_hat"].as_f64().unwrap() > 0.0);
    assert!(json["scale"]["d_hat_n"].as_f64().unwrap() > 0.0);
    assert_eq!(json["scale"]["K"], 5);

    let split = run(&[
        "estimate", "--input", path_str(&data), "--method", "split", "--stat", "cvm",
    ]);
    assert!(split.status.success());
    let json = stdout_json(&split);
    assert!(json["hurst"]["split_k"].as_u64().unwrap() > 0);
}

#[test]
fn calibrate_is_deterministic_and_echoes_entropy_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let t1 = dir.path().join("t1.json");
    let t2 = dir.path().join("t2.json");
    let epoch = [("SOURCE_DATE_EPOCH", "1700000000")];
    let out = run_env(
        &[
            "calibrate", "--stat", "cvm", "--n", "64", "--hurst", "0.7", "--alpha",
            "0.05,0.01", "--reps", "200", "--seed", "11", "--out", path_str(&t1),
        ],
        &epoch,
    );
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let json = stdout_json(&out);
    assert_eq!(json["seed"], 11);
    assert_eq!(json["entries"], 2, "one cvm entry per alpha");

    run_env(
        &[
            "calibrate", "--stat", "cvm", "--n", "64", "--hurst", "0.7", "--alpha",
            "0.05,0.01", "--reps", "200", "--seed", "11", "--out", path_str(&t2),
        ],
        &epoch,
    );
    assert_eq!(
        std::fs::read(&t1).unwrap(),
        std::fs::read(&t2).unwrap(),
        "same seed must produce a byte-identical table"
    );

    let table: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&t1).unwrap()).unwrap();
    assert_eq!(table["master_seed"], 11);
    let entries = table["entries"].as_array().unwrap();
    assert_eq!(entries.len(), 2);
    for e in entries {
        assert_eq!(e["stat"], "cvm");
        assert_eq!(e["n"], 64);
        assert_eq!(e["H"], 0.7);
        assert_eq!(e["J"], 200);
        assert!(e["value"].as_f64().unwrap() > 0.0);
    }

    // Entropy seeding: seed 0 draws a fresh master seed and echoes it.
    let out = run_env(
        &[
            "calibrate", "--stat", "cvm", "--n", "32", "--hurst", "0.7", "--reps", "100",
            "--seed", "0", "--out", path_str(&dir.path().join("t3.json")),
        ],
        &epoch,
    );
    assert!(out.status.success());
    assert!(stdout_json(&out)["seed"].as_u64().unwrap() > 0);
}

#[test]
fn power_study_runs_from_a_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("study.cfg");
    let out_csv = dir.path().join("table.csv");
    std::fs::write(
        &config,
        "# desk-scale smoke study\n\
         scenario = mean_shift\n\
         stat = cvm\n\
         hurst_mode = known\n\
         n = 48\n\
         H = 0.7\n\
         mu = 2.0\n\
         reps = 100\n\
         J = 100\n",
    )
    .unwrap();
    let out = run(&[
        "power", "--config", path_str(&config), "--out", path_str(&out_csv), "--seed", "5",
    ]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let json = stdout_json(&out);
    assert_eq!(json["rows"], 1);
    assert_eq!(json["seed"], 5);

    let csv = std::fs::read_to_string(&out_csv).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("scenario,stat,hurst_mode,n,H,rate,reps"));
    let row = lines.next().expect("one data row");
    assert!(row.starts_with("mean_shift,cvm,known,48,"), "row: {row}");
    let rate: f64 = row.split(',').nth(5).unwrap().parse().unwrap();
    assert!((0.0..=1.0).contains(&rate), "rate {rate}");

    // Replay must be byte-identical.
    let replay_csv = dir.path().join("replay.csv");
    run(&[
        "power", "--config", path_str(&config), "--out", path_str(&replay_csv), "--seed", "5",
    ]);
    assert_eq!(std::fs::read(&out_csv).unwrap(), std::fs::read(&replay_csv).unwrap());
}

#[test]
fn power_rejects_unknown_config_keys() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("study.cfg");
    std::fs::write(&config, "scenario = mean_shift\nbogus = 1\n").unwrap();
    let out = run(&[
        "power", "--config", path_str(&config), "--out",
        path_str(&dir.path().join("t.csv")), "--seed", "5",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));
}

#[test]
fn verify_fstar_suite_passes() {
    let out = run(&["verify", "--suite", "fstar"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("PASS"), "stdout: {text}");
    assert!(!text.contains("FAIL"), "stdout: {text}");
}

#[test]
fn verify_rejects_unknown_suites() {
    let out = run(&["verify", "--suite", "nonsense"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown suite"));
}

#[test]
fn are_mean_variance_reports_the_efficiency() {
    let out = run(&[
        "are", "--mode", "mean_variance", "--c1", "1.0", "--c2", "1.0", "--q", "1.36",
        "--hurst", "0.7",
    ]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let json = stdout_json(&out);
    assert!(json["fstar"].as_f64().unwrap() > 1.0);
    assert!(json["are"].as_f64().unwrap() > 1.0);
    let r = json["cubic_ratio"].as_f64().unwrap();
    assert!((r - 1.0 / 3.0).abs() < 1e-8);
}
