use std::fs;
use std::path::{Path, PathBuf};

use qchaos::harness::{
    emit_plot_data, load_config, parse_config, run_experiment, ExperimentConfig, RunManifest, RunOptions,
    RunStatus, JOURNAL_FILE, MANIFEST_FILE,
};
use qchaos::Error;

fn config(body: &str, dir: &Path) -> ExperimentConfig {
    let text = format!(
        "schema_version = 1\n{body}\n[output]\ndirectory = \"{}\"\n",
        dir.display().to_string().replace('\\', "/")
    );
    parse_config(&text).unwrap()
}

const TINY_SWEEP: &str = r#"
experiment = "le_sweep"
[model]
sites = 4
w_grid = [2.0]
[trajectory]
transient_time = 2.0
[lyapunov]
tau = 1.0
n_renorms = 4
[sampling]
n_disorder = 1
n_traj = 1
master_seed = 5
"#;

const SMALL_SWEEP: &str = r#"
experiment = "le_sweep"
[model]
sites = 4
w_grid = [1.0, 10.0]
[trajectory]
transient_time = 2.0
[lyapunov]
tau = 1.0
n_renorms = 5
renorm_direction = "random"
[sampling]
n_disorder = 3
n_traj = 2
master_seed = 11
"#;

fn read(dir: &Path, f: &str) -> Vec<u8> {
    fs::read(dir.join(f)).unwrap_or_else(|e| panic!("{}: {e}", dir.join(f).display()))
}

#[test]
fn single_cell_sweep() {
    let tmp = tempfile::tempdir().unwrap();
    let m = run_experiment(&config(TINY_SWEEP, tmp.path()), &RunOptions::default()).unwrap();
    assert_eq!(m.status, RunStatus::Completed);
    assert_eq!(m.jobs.total, 1);
    let cells = String::from_utf8(read(tmp.path(), "cells.csv")).unwrap();
    assert_eq!(cells.lines().count(), 2, "{cells}");
    assert!(cells.starts_with("W,disorder_seed,pair_seed,lambda"));
    let sweep = String::from_utf8(read(tmp.path(), "sweep.csv")).unwrap();
    assert_eq!(sweep.lines().nth(1).unwrap().split(',').nth(3), Some("1"));
    for a in &m.artifacts {
        assert!(tmp.path().join(a).exists(), "listed artifact {a} missing");
    }
    assert_eq!(RunManifest::read(tmp.path()).unwrap(), m);
}

#[test]
fn same_seed_gives_identical_outputs() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_experiment(&config(SMALL_SWEEP, a.path()), &RunOptions::default()).unwrap();
    run_experiment(&config(SMALL_SWEEP, b.path()), &RunOptions { workers: Some(1) }).unwrap();
    for f in ["cells.csv", "sweep.csv", "sweep.json"] {
        assert_eq!(read(a.path(), f), read(b.path(), f), "{f}");
    }
}

#[test]
fn killed_run_resumes_from_journal() {
    let full = tempfile::tempdir().unwrap();
    run_experiment(&config(SMALL_SWEEP, full.path()), &RunOptions::default()).unwrap();

    let part = tempfile::tempdir().unwrap();
    let cfg = config(SMALL_SWEEP, part.path());
    run_experiment(&cfg, &RunOptions::default()).unwrap();
    // Keep five journal lines plus a torn sixth, as a kill mid-write would.
    let journal = String::from_utf8(read(part.path(), JOURNAL_FILE)).unwrap();
    let mut kept: String = journal.lines().take(5).map(|l| format!("{l}\n")).collect();
    kept.push_str(&journal.lines().nth(5).unwrap()[..20]);
    fs::write(part.path().join(JOURNAL_FILE), kept).unwrap();
    for f in ["cells.csv", "sweep.csv", "sweep.json"] {
        fs::remove_file(part.path().join(f)).unwrap();
    }

    let m = run_experiment(&cfg, &RunOptions::default()).unwrap();
    assert_eq!(m.jobs.resumed, 5);
    assert_eq!(m.jobs.completed, 12);
    for f in ["cells.csv", "sweep.csv"] {
        assert_eq!(read(full.path(), f), read(part.path(), f), "{f}");
    }
}

#[test]
fn different_config_in_same_directory_is_refused() {
    let tmp = tempfile::tempdir().unwrap();
    run_experiment(&config(TINY_SWEEP, tmp.path()), &RunOptions::default()).unwrap();
    let other = config(&TINY_SWEEP.replace("master_seed = 5", "master_seed = 6"), tmp.path());
    match run_experiment(&other, &RunOptions::default()) {
        Err(Error::Config(msg)) => assert!(msg.contains("different config"), "{msg}"),
        r => panic!("expected a config error, got {r:?}"),
    }
}

#[test]
fn distribution_pipeline_and_fig1_bundle() {
    let tmp = tempfile::tempdir().unwrap();
    let body = r#"
experiment = "le_distribution"
[model]
sites = 3
[trajectory]
transient_time = 1.0
[lyapunov]
tau = 1.0
n_renorms = 5
[sampling]
n_disorder = 3
n_traj = 4
master_seed = 2
"#;
    let m = run_experiment(&config(body, tmp.path()), &RunOptions::default()).unwrap();
    assert_eq!(m.status, RunStatus::Completed);
    assert_eq!(m.jobs.completed, 12);
    assert_eq!(m.derived_seeds.len(), 3 + 12);
    let summary: serde_json::Value = serde_json::from_slice(&read(tmp.path(), "summary.json")).unwrap();
    assert_eq!(summary["n"], 12);
    let files = emit_plot_data(&m).unwrap();
    for f in ["plots/fig1_hist.csv", "plots/fig1_normal_fit.json", "plots/fig1.json"] {
        assert!(files.iter().any(|x| x == f), "{f} not in {files:?}");
        assert!(tmp.path().join(f).exists());
    }
    let fit: serde_json::Value = serde_json::from_slice(&read(tmp.path(), "plots/fig1_normal_fit.json")).unwrap();
    assert!((fit["mean"].as_f64().unwrap() - summary["mean"].as_f64().unwrap()).abs() < 1e-15);
}

#[test]
fn sweep_bundle_and_missing_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let m = run_experiment(&config(TINY_SWEEP, tmp.path()), &RunOptions::default()).unwrap();
    let files = emit_plot_data(&m).unwrap();
    assert!(files.contains(&"plots/fig3a_M4.csv".to_string()));
    let head = String::from_utf8(read(tmp.path(), "plots/fig3a_M4.csv")).unwrap();
    assert!(head.starts_with("W,mean_lambda,stderr\n"));

    fs::remove_file(tmp.path().join("sweep.csv")).unwrap();
    match emit_plot_data(&m) {
        Err(Error::MissingArtifacts(list)) => assert_eq!(list, vec!["sweep.csv".to_string()]),
        r => panic!("expected missing artifacts, got {r:?}"),
    }
}

const TINY_CSR: &str = r#"
experiment = "csr_experiment"
[model]
sites = 4
w_grid = [1.0, 20.0]
[csr]
bins = 10
marginal_bins = 8
section_bins = 8
stripe_halfwidth = 0.3
reference = ["ginue", "poisson"]
ginue_size = 30
ginue_count = 2
poisson_size = 200
poisson_count = 2
[sampling]
n_disorder = 3
master_seed = 4
"#;

#[test]
fn csr_pipeline_caches_spectra_and_emits_fig4() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(TINY_CSR, tmp.path());
    let m = run_experiment(&cfg, &RunOptions::default()).unwrap();
    assert_eq!(m.status, RunStatus::Completed, "{:?}", m.failures);
    assert_eq!(m.jobs.total, 6);
    assert_eq!(m.jobs.resumed, 0);
    for f in ["csr_hist_W1.csv", "radial_W20.csv", "angular_ref_ginue.csv", "summary_W1.json", "spectra/W20_d2.csv"] {
        assert!(m.artifacts.iter().any(|a| a == f), "{f} not listed");
    }
    let first = read(tmp.path(), "csr_summary.csv");

    let again = run_experiment(&cfg, &RunOptions::default()).unwrap();
    assert_eq!(again.jobs.resumed, 6);
    assert_eq!(read(tmp.path(), "csr_summary.csv"), first);

    let files = emit_plot_data(&again).unwrap();
    for f in ["plots/fig4_W1_hist.csv", "plots/fig4_W20_radial.csv", "plots/fig4_ref_poisson_angular.csv", "plots/fig4_hist.json"] {
        assert!(files.iter().any(|x| x == f), "{f} not in {files:?}");
    }
}

#[test]
fn degenerate_integrable_spectrum_is_quarantined() {
    let tmp = tempfile::tempdir().unwrap();
    let body = "experiment = \"csr_experiment\"\n[model]\nkind = \"integrable\"\nsites = 3\n[sampling]\nn_disorder = 1\n";
    let m = run_experiment(&config(body, tmp.path()), &RunOptions::default()).unwrap();
    assert_eq!(m.status, RunStatus::CompletedWithFailures);
    assert!(m.failures.iter().any(|f| f.job == "csr W0"), "{:?}", m.failures);
}

#[test]
fn trajectory_trace_writes_traces() {
    let tmp = tempfile::tempdir().unwrap();
    let body = r#"
experiment = "trajectory_trace"
[model]
sites = 4
w = 1.0
[trajectory]
transient_time = 1.0
run_time = 4.0
trace_stride = 5
[lyapunov]
tau = 1.0
n_renorms = 3
[sampling]
n_traj = 2
"#;
    let m = run_experiment(&config(body, tmp.path()), &RunOptions::default()).unwrap();
    assert_eq!(m.status, RunStatus::Completed);
    let trace = String::from_utf8(read(tmp.path(), "trace.csv")).unwrap();
    assert!(trace.starts_with("t,norm_sq,o_t,jump_flag\n"));
    assert_eq!(trace.lines().count(), 1 + 1 + 500 / 5);
    let dist = String::from_utf8(read(tmp.path(), "distance.csv")).unwrap();
    assert!(dist.lines().skip(1).filter(|l| l.ends_with(",1")).count() >= 2 * 3);
    let files = emit_plot_data(&m).unwrap();
    assert!(files.contains(&"plots/fig2_distance.csv".to_string()));
}

#[test]
fn unraveling_check_reports_trace_distance() {
    let tmp = tempfile::tempdir().unwrap();
    let body = r#"
experiment = "unraveling_check"
[model]
sites = 4
w = 2.0
[trajectory]
run_time = 5.0
[sampling]
n_disorder = 1
n_traj = 2000
master_seed = 1
"#;
    let m = run_experiment(&config(body, tmp.path()), &RunOptions::default()).unwrap();
    assert_eq!(m.artifacts, vec!["unraveling_check.json".to_string()]);
    let r: serde_json::Value = serde_json::from_slice(&read(tmp.path(), "unraveling_check.json")).unwrap();
    assert!(r["trace_distance"].as_f64().unwrap() <= 0.05, "{r}");
    assert_eq!(r["n_quarter"], 500);
}

#[test]
fn manifest_records_failure_status() {
    let tmp = tempfile::tempdir().unwrap();
    let body = "experiment = \"csr_experiment\"\n[model]\nsites = 4\nw = 1.0\n[sampling]\nn_disorder = 1\n";
    let cfg = config(body, tmp.path());
    fs::write(tmp.path().join("spectra"), "not a directory").unwrap();
    assert!(run_experiment(&cfg, &RunOptions::default()).is_err());
    let m = RunManifest::read(tmp.path()).unwrap();
    assert_eq!(m.status, RunStatus::Failed);
    assert!(m.error.is_some());
    assert!(tmp.path().join(MANIFEST_FILE).exists());
}

fn presets_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../presets")
}

#[test]
fn shipped_presets_parse() {
    let mut n = 0;
    for entry in fs::read_dir(presets_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let text = fs::read_to_string(&path).unwrap();
            assert!(text.contains("Expected runtime"), "{} lacks a runtime note", path.display());
            load_config(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            n += 1;
        }
    }
    assert!(n >= 6, "only {n} presets");
}
