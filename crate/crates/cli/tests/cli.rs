use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn driftmle(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_driftmle"))
        .args(args)
        .current_dir(dir)
        .env_remove("DRIFTMLE_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("JSON on stdout")
}

fn write_linear_path(path: &Path, n: usize, horizon: f64) {
    let mut s = String::from("t,x\n");
    for k in 0..=n {
        let t = horizon * k as f64 / n as f64;
        s.push_str(&format!("{t},{}\n", 2.0 * t));
    }
    fs::write(path, s).unwrap();
}

#[test]
fn simulate_wiener_writes_eleven_rows() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["simulate", "--model", "wiener", "--theta", "0", "--T", "1", "--steps", "10", "--seed", "1", "--out", "p.csv"];
    assert!(driftmle(&args, dir.path()).status.success());
    let text = fs::read_to_string(dir.path().join("p.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t,x");
    assert_eq!(lines.len(), 12);
    let first: Vec<f64> = lines[1].split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(first, vec![0.0, 0.0]);
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a.csv", "b.csv"] {
        let args = ["simulate", "--model", "fbm:0.7+wiener", "--theta", "1", "--T", "2", "--steps", "500", "--seed", "9", "--out", out];
        assert!(driftmle(&args, dir.path()).status.success());
    }
    assert_eq!(fs::read(dir.path().join("a.csv")).unwrap(), fs::read(dir.path().join("b.csv")).unwrap());
}

#[test]
fn invalid_hurst_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = driftmle(&["simulate", "--model", "fbm:1.2", "--theta", "0", "--T", "1", "--steps", "10"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("(0,1)"));
}

#[test]
fn noiseless_drift_is_recovered() {
    let dir = tempfile::tempdir().unwrap();
    write_linear_path(&dir.path().join("line.csv"), 400, 4.0);
    for model in ["wiener", "fbm:0.3", "fbm:0.8", "fbm:0.6+wiener", "fbm:0.3+fbm:0.8"] {
        let report = json(&driftmle(&["estimate", "--input", "line.csv", "--model", model], dir.path()));
        assert!((report["theta_hat"].as_f64().unwrap() - 2.0).abs() < 1e-10, "{model}: {report}");
    }
    // path on the 16384-cell weight grid used for T = 4
    write_linear_path(&dir.path().join("fine.csv"), 16384, 4.0);
    for model in ["fbm:0.6+wiener", "fbm:0.7"] {
        let report = json(&driftmle(
            &["estimate", "--input", "fine.csv", "--model", model, "--scheme", "continuous"],
            dir.path(),
        ));
        assert!((report["theta_hat"].as_f64().unwrap() - 2.0).abs() < 1e-9, "{model}: {report}");
    }
}

#[test]
fn wiener_estimate_is_endpoint_over_horizon() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["simulate", "--model", "wiener", "--theta", "2", "--T", "100", "--steps", "1000", "--seed", "5", "--out", "w.csv"];
    assert!(driftmle(&args, dir.path()).status.success());
    let text = fs::read_to_string(dir.path().join("w.csv")).unwrap();
    let last: f64 = text.lines().last().unwrap().split(',').nth(1).unwrap().parse().unwrap();
    let report = json(&driftmle(&["estimate", "--input", "w.csv", "--model", "wiener"], dir.path()));
    assert!((report["theta_hat"].as_f64().unwrap() - last / 100.0).abs() <= 1e-12 * (last / 100.0).abs());
    assert!((report["theoretical_variance"].as_f64().unwrap() - 0.01).abs() < 1e-15);
    assert_eq!(report["scheme"], "discrete");
}

#[test]
fn irregular_grid_uses_dense_solver() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("irr.csv"), "t,x\n0,0\n0.5,1\n0.7,1.4\n2,4\n").unwrap();
    let report = json(&driftmle(&["estimate", "--input", "irr.csv", "--model", "fbm:0.7"], dir.path()));
    assert!((report["theta_hat"].as_f64().unwrap() - 2.0).abs() < 1e-12);
    assert!(report["grid"]["step"].is_null());
}

#[test]
fn continuous_two_fbm_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    write_linear_path(&dir.path().join("line.csv"), 10, 1.0);
    let out = driftmle(
        &["estimate", "--input", "line.csv", "--model", "fbm:0.6+fbm:0.8", "--scheme", "continuous"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("weight solver"));
}

#[test]
fn missing_input_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = driftmle(&["estimate", "--input", "absent.csv", "--model", "wiener"], dir.path());
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn malformed_input_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.csv"), "t,x\n0,0\nabc,1\n").unwrap();
    let out = driftmle(&["estimate", "--input", "bad.csv", "--model", "wiener"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_flag_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(driftmle(&["simulate", "--bogus"], dir.path()).status.code(), Some(2));
}

#[test]
fn solve_ht_writes_weight_file_and_cache_is_reused() {
    let dir = tempfile::tempdir().unwrap();
    let out = driftmle(&["solve-ht", "--model", "fbm:0.7+wiener", "--T", "2", "--out", "ht.csv"], dir.path());
    assert!(out.status.success());
    let text = fs::read_to_string(dir.path().join("ht.csv")).unwrap();
    assert!(text.starts_with("# driftmle weight function v1"));
    assert!(text.contains("# method=neumann"));

    let args = ["simulate", "--model", "fbm:0.7+wiener", "--theta", "1", "--T", "2", "--steps", "200", "--seed", "2", "--out", "p.csv"];
    assert!(driftmle(&args, dir.path()).status.success());
    let est = [
        "estimate", "--input", "p.csv", "--model", "fbm:0.7+wiener", "--scheme", "continuous", "--cache-dir", "cache",
    ];
    let first = json(&driftmle(&est, dir.path()));
    assert_eq!(fs::read_dir(dir.path().join("cache")).unwrap().count(), 1);
    let second = json(&driftmle(&est, dir.path()));
    assert_eq!(first, second);
}

#[test]
fn solve_ht_method_must_fit_model() {
    let dir = tempfile::tempdir().unwrap();
    let out = driftmle(&["solve-ht", "--model", "fbm:0.7", "--T", "1", "--method", "neumann"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn output_directory_comes_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_driftmle"))
        .args(["simulate", "--model", "wiener", "--theta", "0", "--T", "1", "--steps", "4"])
        .current_dir(dir.path())
        .env("DRIFTMLE_OUT_DIR", dir.path().join("runs"))
        .status()
        .unwrap();
    assert!(status.success());
    assert!(dir.path().join("runs").join("path.csv").exists());
}

#[test]
fn table1_small_run_has_expected_shape() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "--threads", "2", "table1", "--H-list", "0.6,0.8", "--T-list", "1,2", "--reps", "20", "--steps-per-unit", "200",
        "--cells-per-unit", "1024", "--out", "t.csv",
    ];
    assert!(driftmle(&args, dir.path()).status.success());
    let text = fs::read_to_string(dir.path().join("t.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "H,T,scheme,n_reps,sample_mean,sample_variance,theoretical_variance");
    assert_eq!(lines.len(), 5);
    let row: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(&row[..4], &["0.6", "1", "continuous", "20"]);
    // independent fine-grid discrete information gives 1.99818 for (0.6, 1)
    let v: f64 = row[6].parse().unwrap();
    assert!((v - 1.99818).abs() / 1.99818 < 1e-3, "theoretical variance {v}");
}

#[test]
fn table1_json_and_consistency() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "table1", "--H-list", "0.7", "--T-list", "1", "--reps", "10", "--steps-per-unit", "100", "--cells-per-unit",
        "512", "--format", "json", "--out", "t.json",
    ];
    assert!(driftmle(&args, dir.path()).status.success());
    let rows: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("t.json")).unwrap()).unwrap();
    assert_eq!(rows[0]["H"], 0.7);
    assert_eq!(rows[0]["scheme"], "continuous");

    let args = ["consistency", "--model", "fbm:0.7", "--N-list", "10,100", "--reps", "50", "--out", "c.csv"];
    assert!(driftmle(&args, dir.path()).status.success());
    let text = fs::read_to_string(dir.path().join("c.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), "N,h,n_reps,sample_mean,sample_mse,theoretical_variance");
    assert_eq!(text.lines().count(), 3);
}
