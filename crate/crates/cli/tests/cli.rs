use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn qchaos(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qchaos")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("run.toml");
    fs::write(&path, format!("schema_version = 1\n{body}")).unwrap();
    path.display().to_string()
}

#[test]
fn check_filter_runs_matching_checks() {
    let o = qchaos(&["check", "--filter", "csr_"]);
    assert!(o.status.success(), "{}", stdout(&o));
    let out = stdout(&o);
    assert!(out.contains("PASS csr_affine_invariance"), "{out}");
    assert!(out.contains("PASS csr_unit_disc"), "{out}");
    assert!(!out.contains("trace_preservation"));
    assert!(out.contains("2 passed, 0 failed"));
}

#[test]
fn check_with_no_match_fails() {
    let o = qchaos(&["check", "--filter", "no_such_check"]);
    assert!(!o.status.success());
}

#[test]
fn simulate_with_report_then_report_again() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "experiment = \"le_sweep\"\n[model]\nsites = 4\nw_grid = [1.0, 12.0]\n[trajectory]\ntransient_time = 1.0\n\
         [lyapunov]\ntau = 1.0\nn_renorms = 3\n[sampling]\nn_disorder = 2\nn_traj = 1\n",
    );
    let out = tmp.path().join("run");
    let out_s = out.display().to_string();
    let o = qchaos(&["simulate", "--config", &cfg, "--seed", "9", "--out", &out_s, "--workers", "1", "--report"]);
    assert!(o.status.success(), "{}{}", stdout(&o), String::from_utf8_lossy(&o.stderr));
    assert!(out.join("plots/fig3a_M4.csv").exists());
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["master_seed"], 9);
    assert_eq!(manifest["status"], "completed");

    fs::remove_dir_all(out.join("plots")).unwrap();
    let o = qchaos(&["report", "--out", &out_s]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("fig3a_M4.csv"));
}

#[test]
fn spectrum_then_csr() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "experiment = \"csr_experiment\"\n[model]\nsites = 4\nw = 3.0\n");
    let out = tmp.path().display().to_string();
    let o = qchaos(&["spectrum", "--config", &cfg, "--out", &out, "--realization", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let spec = tmp.path().join("spectrum_W3_d2.csv");
    assert_eq!(fs::read_to_string(&spec).unwrap().lines().count(), 1 + 36);

    let csr_out = tmp.path().join("csr");
    let o = qchaos(&[
        "csr",
        &spec.display().to_string(),
        "--out",
        &csr_out.display().to_string(),
        "--bins",
        "10",
        "--drop-stationary",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["csr_hist.csv", "radial.csv", "angular.csv", "summary.json"] {
        assert!(csr_out.join(f).exists(), "{f}");
    }
    let summary: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(summary["n_spectra"], 1);
    assert_eq!(summary["n_samples"], 35);
}

#[test]
fn bad_config_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "experiment = \"le_sweep\"\n[model]\nsites = 1\n");
    let o = qchaos(&["simulate", "--config", &cfg]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("error"));
    assert!(!tmp.path().join("results").exists());
}

#[test]
fn report_refuses_missing_run() {
    let tmp = tempfile::tempdir().unwrap();
    let o = qchaos(&["report", "--out", &tmp.path().display().to_string()]);
    assert!(!o.status.success());
}
