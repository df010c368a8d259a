//! End-to-end coverage of the command-line interface: generate, fit, eval,
//! experiment, and plot, including report round-trips and byte-level
//! reproducibility of re-runs.

use std::path::{Path, PathBuf};
use std::process::Command;

fn hlce() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hlce"))
}

fn tmp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("hlce_cli_{tag}_{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run_ok(cmd: &mut Command) -> String {
    let out = cmd.output().unwrap();
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn gen_fit_eval_round_trip() {
    let dir = tmp_dir("fit");
    run_ok(hlce()
        .args(["gen", "dataset1", "--n-e", "2000", "--n-o", "3000", "--seed", "5"])
        .arg("--out")
        .arg(&dir));
    let data = dir.join("dataset.csv");
    let truth = dir.join("truth.csv");
    assert!(data.exists() && truth.exists());
    // dataset header matches the documented schema
    assert!(read(&data).starts_with("g,a,s,y,x0\n"));
    assert!(read(&truth).starts_with("tau,s0,s1,y0,y1\n"));

    run_ok(hlce()
        .args(["fit", "--kind", "naive", "--nuisance", "oracle", "--seed", "5"])
        .arg("--data")
        .arg(&data)
        .arg("--out")
        .arg(&dir));
    let preds = dir.join("predictions.csv");
    assert!(read(&preds).starts_with("tau_hat\n"));

    let stdout = run_ok(hlce()
        .args(["eval"])
        .arg("--pred")
        .arg(&preds)
        .arg("--truth")
        .arg(&truth)
        .arg("--json-out")
        .arg(dir.join("metrics.json")));
    // naive + oracle nuisances reproduces the analytic effect exactly
    let pehe_line = stdout.lines().find(|l| l.starts_with("pehe=")).unwrap();
    let pehe: f64 = pehe_line.trim_start_matches("pehe=").parse().unwrap();
    assert!(pehe < 1e-9, "oracle naive pehe {pehe}");
    let metrics: serde_json::Value =
        serde_json::from_str(&read(&dir.join("metrics.json"))).unwrap();
    assert!(metrics.get("pehe").is_some() && metrics.get("ate_error").is_some());

    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn exp_reports_are_reproducible_and_plottable() {
    let dir = tmp_dir("exp");
    let args = |out: &Path| {
        let mut cmd = hlce();
        cmd.args([
            "exp",
            "oracle-check",
            "--replications",
            "2",
            "--n-e",
            "400",
            "--n-o",
            "600",
            "--seed",
            "9",
        ])
        .arg("--out")
        .arg(out);
        cmd
    };
    let first = dir.join("run1");
    let second = dir.join("run2");
    std::fs::create_dir_all(&first).unwrap();
    std::fs::create_dir_all(&second).unwrap();
    run_ok(&mut args(&first));
    run_ok(&mut args(&second));
    // identical CSV bytes across re-runs of the same configuration
    assert_eq!(read(&first.join("report.csv")), read(&second.join("report.csv")));
    let json: serde_json::Value = serde_json::from_str(&read(&first.join("report.json"))).unwrap();
    assert_eq!(json["records"].as_array().unwrap().len(), 8);
    for field in ["estimator", "preset", "n_e", "n_o", "seed", "pehe", "ate_error", "wall_ms"] {
        assert!(json["records"][0].get(field).is_some(), "missing {field}");
    }

    // a fast misspecification run feeds the bar plot
    let mdir = dir.join("misspec");
    std::fs::create_dir_all(&mdir).unwrap();
    run_ok(hlce()
        .args([
            "exp",
            "misspec",
            "--replications",
            "2",
            "--fast",
            "--n-e",
            "800",
            "--n-o",
            "1200",
            "--seed",
            "3",
        ])
        .arg("--out")
        .arg(&mdir));
    let report = mdir.join("report.json");
    run_ok(hlce()
        .args(["plot", "--kind", "misspec-bars", "--plot-out", "bars.svg"])
        .arg("--report")
        .arg(&report)
        .arg("--out")
        .arg(&mdir));
    let svg = read(&mdir.join("bars.svg"));
    assert!(svg.starts_with("<svg"));
    // six preset bars plus the background rectangle
    assert_eq!(svg.matches("<rect").count(), 7);

    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn sweep_report_plots_lines_per_estimator() {
    let dir = tmp_dir("sweep");
    // tiny grid via config file
    let config = serde_json::json!({
        "experiment": "sweep-e",
        "replications": 2,
        "n_e_grid": [150, 300, 600],
        "n_o": 400,
        "estimators": ["naive", "reg", "pro", "mr"],
    });
    let config_path = dir.join("config.json");
    std::fs::write(&config_path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    run_ok(hlce()
        .args(["exp", "sweep-e", "--seed", "4", "--workers", "2"])
        .arg("--config")
        .arg(&config_path)
        .arg("--out")
        .arg(&dir));
    run_ok(hlce()
        .args(["plot", "--kind", "sweep-lines", "--plot-out", "lines.svg"])
        .arg("--report")
        .arg(dir.join("report.json"))
        .arg("--out")
        .arg(&dir));
    let svg = read(&dir.join("lines.svg"));
    assert_eq!(svg.matches("<polyline").count(), 4);
    assert!(svg.contains("n_e (log scale)"));
    // plot kind mismatch is a hard error
    let out = hlce()
        .args(["plot", "--kind", "misspec-bars", "--plot-out", "bad.svg"])
        .arg("--report")
        .arg(dir.join("report.json"))
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert!(!out.status.success());

    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn gen_semisynth_presets_respect_schemas() {
    let dir = tmp_dir("semi");
    run_ok(hlce()
        .args(["gen", "ihdp", "--n", "600", "--seed", "8"])
        .arg("--out")
        .arg(&dir));
    let data = read(&dir.join("dataset.csv"));
    let header = data.lines().next().unwrap();
    // 17 observed covariates out of 25
    assert!(header.starts_with("g,a,s,y,x0,") && header.ends_with(",x16"));
    let truth = read(&dir.join("truth.csv"));
    assert!(truth.starts_with("tau,s0,s1,y0,y1\n"));
    assert_eq!(truth.lines().count(), 601);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn load_errors_surface_with_row_numbers() {
    let dir = tmp_dir("err");
    let bad = dir.join("bad.csv");
    std::fs::write(&bad, "g,a,s,y,x0\nE,1,0.5,3.0,0.1\n").unwrap();
    let out = hlce()
        .args(["fit"])
        .arg("--data")
        .arg(&bad)
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("y present for experimental row 1"),
        "stderr: {stderr}"
    );
    std::fs::remove_dir_all(&dir).ok();
}
