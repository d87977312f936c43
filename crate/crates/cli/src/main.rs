//! `qchaos` command-line front end.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use qchaos::csr::{
    angular_marginal, csr_histogram, csr_values, radial_marginal, real_axis_section,
};
use qchaos::harness::{
    self, checks, config::ExperimentKind, csr_group_summary, emit_plot_data, load_config, model_for,
    report::emit_plot_data_in, w_tag, RunManifest, RunOptions, RunStatus,
};
use qchaos::liouville::{build_superoperator, spectrum, Spectrum};

#[derive(Parser)]
#[command(name = "qchaos", version, about = "Lyapunov exponents and spacing-ratio statistics of Lindblad dynamics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides `sampling.master_seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `output.directory`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Worker threads (default: all cores).
        #[arg(long)]
        workers: Option<usize>,
        /// Also write the plot bundles when the run completes.
        #[arg(long)]
        report: bool,
    },
    /// Spacing-ratio statistics of an eigenvalue CSV (`re,im`).
    Csr {
        spectrum: PathBuf,
        #[arg(long, default_value = "csr_out")]
        out: PathBuf,
        #[arg(long, default_value_t = 50)]
        bins: usize,
        #[arg(long, default_value_t = 50)]
        marginal_bins: usize,
        #[arg(long, default_value_t = 40)]
        section_bins: usize,
        #[arg(long, default_value_t = 0.05)]
        halfwidth: f64,
        /// Drop the eigenvalue closest to zero first.
        #[arg(long)]
        drop_stationary: bool,
    },
    /// Full superoperator spectrum of the configured model, one CSV per `W`.
    Spectrum {
        #[command(flatten)]
        common: Common,
        /// Disorder realization index.
        #[arg(long, default_value_t = 0)]
        realization: usize,
    },
    /// Run the invariant and oracle suite.
    Check {
        /// Only checks whose name contains this string.
        #[arg(long)]
        filter: Option<String>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Plot bundles for a finished run directory.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
}

fn load(common: &Common) -> Result<harness::ExperimentConfig> {
    let mut cfg = load_config(&common.config).with_context(|| format!("loading {}", common.config.display()))?;
    if let Some(s) = common.seed {
        cfg.sampling.master_seed = s;
    }
    if let Some(o) = &common.out {
        cfg.output.directory = o.clone();
    }
    Ok(cfg)
}

fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        Some(n) => Ok(rayon_pool(n)?.install(f)),
        None => Ok(f()),
    }
}

fn rayon_pool(n: usize) -> Result<rayon::ThreadPool> {
    Ok(rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).stack_size(STACK_BYTES).build()?)
}

fn simulate(common: &Common, workers: Option<usize>, report: bool) -> Result<ExitCode> {
    let cfg = load(common)?;
    eprintln!(
        "running {} into {} (seed {})",
        cfg.experiment.name(),
        cfg.output.directory.display(),
        cfg.sampling.master_seed
    );
    let manifest = harness::run_experiment(&cfg, &RunOptions { workers })?;
    let j = &manifest.jobs;
    println!(
        "{:?}: {} jobs, {} completed, {} failed, {} resumed, {:.1} s",
        manifest.status,
        j.total,
        j.completed,
        j.failed,
        j.resumed,
        manifest.wall_clock_seconds.unwrap_or(0.0)
    );
    for f in &manifest.failures {
        println!("  failed {}: {}", f.job, f.error);
    }
    if cfg.experiment == ExperimentKind::UnravelingCheck {
        let text = std::fs::read_to_string(cfg.output.directory.join("unraveling_check.json"))?;
        println!("{text}");
    }
    if report {
        for f in emit_plot_data(&manifest)? {
            println!("wrote {f}");
        }
    }
    Ok(if manifest.status == RunStatus::Completed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

#[allow(clippy::too_many_arguments)]
fn csr_cmd(
    path: &Path,
    out: &Path,
    bins: usize,
    marginal_bins: usize,
    section_bins: usize,
    halfwidth: f64,
    drop_stationary: bool,
) -> Result<()> {
    let mut spec = Spectrum::read_csv(path, path.display().to_string())?;
    if drop_stationary {
        spec = spec.without_stationary();
    }
    let samples = csr_values(&spec)?;
    std::fs::create_dir_all(out)?;
    csr_histogram(&samples, bins)?.write_csv(out.join("csr_hist.csv"))?;
    radial_marginal(&samples, marginal_bins)?.write_csv(out.join("radial.csv"))?;
    angular_marginal(&samples, marginal_bins)?.write_csv(out.join("angular.csv"))?;
    match real_axis_section(&samples, halfwidth, section_bins) {
        Ok(s) => s.write_csv(out.join("section.csv"))?,
        Err(e) => eprintln!("no stripe section: {e}"),
    }
    let summary = csr_group_summary(&path.display().to_string(), None, 1, &samples)?;
    let text = serde_json::to_string_pretty(&summary)?;
    std::fs::write(out.join("summary.json"), format!("{text}\n"))?;
    println!("{text}");
    Ok(())
}

fn spectrum_cmd(common: &Common, realization: usize) -> Result<()> {
    let cfg = load(common)?;
    let dir = &cfg.output.directory;
    std::fs::create_dir_all(dir)?;
    for &w in &cfg.model.w_grid {
        let model = model_for(&cfg, w, realization)?;
        let s = spectrum(&build_superoperator(&model)?, model.label())?;
        let path = dir.join(format!("spectrum_{}_d{realization}.csv", w_tag(w)));
        s.write_csv(&path)?;
        println!(
            "{}: {} eigenvalues, max |Im| {:e}, max Re {:e} -> {}",
            model.label(),
            s.len(),
            s.max_abs_imag(),
            s.max_real(),
            path.display()
        );
    }
    Ok(())
}

fn check(filter: Option<&str>, workers: Option<usize>) -> Result<ExitCode> {
    let outcomes = with_workers(workers, || checks::run_checks(filter))?;
    if outcomes.is_empty() {
        bail!("no check matches {filter:?}");
    }
    let mut failed = 0;
    for o in &outcomes {
        println!(
            "{} {:<30} {:>7.2}s  {}",
            if o.passed { "PASS" } else { "FAIL" },
            o.name,
            o.seconds,
            o.detail
        );
        failed += usize::from(!o.passed);
    }
    println!("{} passed, {failed} failed", outcomes.len() - failed);
    Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn report(out: &Path) -> Result<()> {
    let manifest = RunManifest::read(out)?;
    for f in emit_plot_data_in(&manifest, out)? {
        println!("wrote {f}");
    }
    Ok(())
}

fn run() -> Result<ExitCode> {
    match Cli::parse().command {
        Command::Simulate { common, workers, report } => simulate(&common, workers, report),
        Command::Csr {
            spectrum,
            out,
            bins,
            marginal_bins,
            section_bins,
            halfwidth,
            drop_stationary,
        } => csr_cmd(&spectrum, &out, bins, marginal_bins, section_bins, halfwidth, drop_stationary)
            .map(|_| ExitCode::SUCCESS),
        Command::Spectrum { common, realization } => spectrum_cmd(&common, realization).map(|_| ExitCode::SUCCESS),
        Command::Check { filter, workers } => check(filter.as_deref(), workers),
        Command::Report { out } => report(&out).map(|_| ExitCode::SUCCESS),
    }
}

/// Dense eigensolvers recurse deeply on the larger superoperators.
const STACK_BYTES: usize = 256 << 20;

fn main() -> ExitCode {
    let _ = rayon::ThreadPoolBuilder::new().stack_size(STACK_BYTES).build_global();
    let outcome = std::thread::Builder::new()
        .stack_size(STACK_BYTES)
        .spawn(run)
        .map_err(anyhow::Error::from)
        .and_then(|h| h.join().map_err(|_| anyhow::anyhow!("worker thread panicked")))
        .and_then(|r| r);
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
