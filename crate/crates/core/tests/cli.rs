use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use edgeprune::harness::CSV_HEADER;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_edgeprune"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn config_arg(name: &str) -> String {
    configs().join(name).display().to_string()
}

fn edited_config(dir: &Path, edit: impl FnOnce(&mut serde_json::Value)) -> String {
    let text = std::fs::read_to_string(configs().join("default.json")).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    edit(&mut v);
    let p = dir.join("cfg.json");
    std::fs::write(&p, v.to_string()).unwrap();
    p.display().to_string()
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["--version"]).status.code(), Some(0));
    assert_eq!(run(&["optimize"]).status.code(), Some(3));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(3));
    let cfg = config_arg("default.json");
    assert_eq!(run(&["optimize", &cfg, "--scheme", "nope"]).status.code(), Some(3));
}

#[test]
fn optimize_reports_json() {
    let out = run(&["optimize", &config_arg("default.json")]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["scheme"], "joint");
    assert_eq!(v["status"], "converged");
    let obj = v["objective_dhat"].as_f64().unwrap();
    assert!(obj > 0.0);
    let trace: Vec<f64> = v["trace"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    assert!(trace.windows(2).all(|w| w[1] <= w[0]));
    assert_eq!(*trace.last().unwrap(), obj);
    let m = &v["metrics"];
    assert!(m["t_total"].as_f64().unwrap() <= 0.25 * (1.0 + 1e-9));
    assert!(m["e_total"].as_f64().unwrap() <= 0.25 * (1.0 + 1e-9));
    assert!(v["note"].as_str().unwrap().contains("accuracy"));
}

#[test]
fn optimize_with_oracle_and_scheme() {
    let out = run(&[
        "optimize",
        &config_arg("default.json"),
        "--scheme",
        "fixed_power",
        "--grid-oracle",
        "6",
    ]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["decision"]["p_tx"].as_f64().unwrap(), 0.5);
    let oracle = v["grid_oracle"]["objective"].as_f64().unwrap();
    assert!(v["objective_dhat"].as_f64().unwrap() <= oracle * (1.0 + 1e-9));
}

#[test]
fn config_errors_exit_3_with_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = edited_config(dir.path(), |v| {
        v["channel"]["bandwidth"] = serde_json::json!(-1.0);
    });
    let out = run(&["optimize", &cfg]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bandwidth"));

    let cfg = edited_config(dir.path(), |v| {
        v["qos"]["deadline"] = serde_json::json!(1.0);
    });
    assert_eq!(run(&["optimize", &cfg]).status.code(), Some(3));
    assert_eq!(run(&["optimize", "/nonexistent/cfg.json"]).status.code(), Some(3));
}

#[test]
fn sweep_to_file() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("e.csv");
    let out = run(&[
        "sweep",
        &config_arg("energy_sweep.json"),
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    assert!(String::from_utf8_lossy(&out.stderr).contains("task accuracy is not measured"));
    let text = std::fs::read_to_string(&out_path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(CSV_HEADER));
    // 7 budgets x 7 schemes
    assert_eq!(lines.count(), 49);
}

#[test]
fn verify_bounds_on_shipped_spec() {
    let out = run(&["verify-bounds", &config_arg("fcdnn8.json")]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["all_hold"], true);
    assert_eq!(v["reports"].as_array().unwrap().len(), 18);
}

#[test]
fn fit_and_rd() {
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path().join("w.txt");
    // quantiles of a Laplace(0, 0.5): heavy tails
    let text: String = (1..2000)
        .map(|i| {
            let u = i as f64 / 2000.0 - 0.5;
            format!("{}\n", -0.5 * u.signum() * (1.0 - 2.0 * u.abs()).ln())
        })
        .collect();
    std::fs::write(&w, text).unwrap();
    let out = run(&["fit", w.to_str().unwrap()]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["preferred"], "laplace");
    assert_eq!(v["count"], 1999);

    let out = run(&["rd", &config_arg("default.json"), "--points", "5"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<Vec<f64>> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 5);
    assert_eq!(rows[4][0], 1.0);
    // more retained bits, smaller bound
    assert!(rows.windows(2).all(|w| w[1][1] > w[0][1] && w[1][2] < w[0][2]));
    assert_eq!(run(&["rd", &config_arg("default.json"), "--points", "1"]).status.code(), Some(3));
}
