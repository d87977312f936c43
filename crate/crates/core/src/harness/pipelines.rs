//! One function per experiment kind. Each writes its tables into the output
//! directory and reports seeds, job counts and artifact names.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ExperimentKind, ModelKind, OutputFormat, ReferenceEnsemble};
use super::{
    completed_cells, done_set, write_json_atomic, DerivedSeed, JobFailure, JobSummary, Journal,
    PipelineOutcome, JOURNAL_FILE,
};
use crate::csr::{
    self, angular_marginal, csr_histogram, disk_mass, pooled_csr, radial_marginal, real_axis_section,
    summary_stats, uniform_disk_share, CsrSample,
};
use crate::linalg::{trace_distance, ComplexOperator, DensityMatrix, PureState};
use crate::liouville::{build_superoperator, evolve_density, spectrum, Spectrum, SpectrumSidecar};
use crate::lyapunov::{
    estimate_le_traced, mean, skewness, std_dev, CellKey, CellRecord, DistributionSpec, ObservableKind,
    PairSeeds, SweepSpec,
};
use crate::models::{
    build_integrable_chain, build_mbl_chain, neel_state, sample_disorder, sample_goe_observable,
    LindbladModel, MblParams,
};
use crate::rng::{self, Purpose};
use crate::unravel::{ensemble_average, trace_trajectory, unravel_ensemble, JumpNoise, Unraveler};
use crate::{Error, Result, C64};

/// Radius of the depletion disks around `z = 0` and `z = 1`.
pub const DISK_RADIUS: f64 = 0.25;
pub const LAMBDA_HIST_BINS: usize = 40;

pub(crate) fn dispatch(cfg: &ExperimentConfig, dir: &Path) -> Result<PipelineOutcome> {
    match cfg.experiment {
        ExperimentKind::LeDistribution => le_distribution(cfg, dir),
        ExperimentKind::LeSweep => le_sweep(cfg, dir),
        ExperimentKind::CsrExperiment => csr_experiment(cfg, dir),
        ExperimentKind::TrajectoryTrace => trajectory_trace(cfg, dir),
        ExperimentKind::UnravelingCheck => unraveling_check(cfg, dir),
    }
}

/// `1` prints as `1`, `0.5` as `0.5`.
pub fn w_tag(w: f64) -> String {
    format!("W{w}")
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(BufWriter::new(f)))
}

fn finish(mut w: csv::Writer<BufWriter<File>>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Journal-backed cell run shared by the two Lyapunov pipelines.
fn run_cells(
    dir: &Path,
    total: usize,
    run: impl FnOnce(&(dyn Fn(&CellKey) -> bool + Sync), &(dyn Fn(&CellRecord) + Sync)) -> Result<Vec<CellRecord>>,
) -> Result<(Vec<CellRecord>, JobSummary, Vec<JobFailure>)> {
    let resumed = completed_cells(Journal::load(dir)?);
    let done = done_set(&resumed);
    let journal = Journal::open(dir)?;
    let write_error = std::sync::Mutex::new(None);
    let fresh = run(&|k| done.contains(k), &|rec| {
        if let Err(e) = journal.append(rec) {
            write_error.lock().expect("lock").get_or_insert(e);
        }
    })?;
    if let Some(e) = write_error.into_inner().expect("lock") {
        return Err(e);
    }
    let n_resumed = resumed.len();
    let mut cells = resumed;
    cells.extend(fresh);
    cells.sort_by_key(|c| c.key);
    let failures: Vec<JobFailure> = cells
        .iter()
        .filter_map(|c| {
            c.error.as_ref().map(|e| JobFailure {
                job: format!("group={} realization={} pair={}", c.key.group, c.key.realization, c.key.pair),
                error: e.clone(),
            })
        })
        .collect();
    let jobs = JobSummary {
        total,
        completed: cells.len() - failures.len(),
        failed: failures.len(),
        resumed: n_resumed,
    };
    Ok((cells, jobs, failures))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LambdaSummary {
    pub n: usize,
    pub mean: f64,
    pub std_dev: f64,
    pub stderr: f64,
    pub skewness: f64,
    pub min: f64,
    pub max: f64,
    pub mean_jump_agreement: f64,
}

pub fn lambda_summary(cells: &[CellRecord]) -> LambdaSummary {
    let xs: Vec<f64> = cells.iter().filter_map(|c| c.lambda).collect();
    let agree: Vec<f64> = cells
        .iter()
        .filter(|c| c.lambda.is_some())
        .map(|c| c.jump_agreement.fraction())
        .collect();
    let sd = std_dev(&xs);
    LambdaSummary {
        n: xs.len(),
        mean: mean(&xs),
        std_dev: sd,
        stderr: sd / (xs.len() as f64).sqrt(),
        skewness: skewness(&xs),
        min: xs.iter().copied().fold(f64::INFINITY, f64::min),
        max: xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        mean_jump_agreement: mean(&agree),
    }
}

/// Equal-width histogram over `[min, max]` of the sample.
pub fn write_lambda_hist(path: &Path, xs: &[f64], bins: usize) -> Result<()> {
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0u64; bins];
    for &x in xs {
        counts[(((x - lo) / width) as usize).min(bins - 1)] += 1;
    }
    let mut w = csv_writer(path)?;
    w.write_record(["bin_left", "bin_right", "count", "density"])?;
    for (i, &c) in counts.iter().enumerate() {
        let left = lo + i as f64 * width;
        let dens = c as f64 / (xs.len() as f64 * width);
        w.write_record([left.to_string(), (left + width).to_string(), c.to_string(), dens.to_string()])?;
    }
    finish(w, path)
}

fn distribution_spec(cfg: &ExperimentConfig) -> DistributionSpec {
    DistributionSpec {
        sites: cfg.model.sites,
        eta_b1: cfg.model.eta_b1,
        kappa: cfg.model.kappa,
        gamma: cfg.model.gamma,
        n_observables: cfg.sampling.n_disorder,
        n_pairs: cfg.sampling.n_traj,
        dt: cfg.trajectory.dt,
        transient_time: cfg.trajectory.transient_time,
        lyapunov: cfg.lyapunov.to_config(),
        master_seed: cfg.sampling.master_seed,
    }
}

fn le_distribution(cfg: &ExperimentConfig, dir: &Path) -> Result<PipelineOutcome> {
    let spec = distribution_spec(cfg);
    let keys = spec.keys();
    let (cells, jobs, failures) = run_cells(dir, keys.len(), |done, sink| {
        crate::lyapunov::run_distribution_cells(&spec, done, sink)
    })?;
    let mut derived_seeds = Vec::new();
    for i in 0..spec.n_observables {
        derived_seeds.push(DerivedSeed {
            job: format!("observable[{i}]"),
            seed: spec.observable_seed(i),
        });
        for p in 0..spec.n_pairs {
            derived_seeds.push(DerivedSeed {
                job: format!("pair[{i},{p}]"),
                seed: spec.pair_seed(i, p),
            });
        }
    }
    let mut artifacts = vec![JOURNAL_FILE.to_string()];
    let out = &cfg.output;
    if out.wants(OutputFormat::Csv) {
        let path = dir.join("cells.csv");
        let mut w = csv_writer(&path)?;
        w.write_record(["observable_seed", "pair_seed", "lambda", "error"])?;
        for c in &cells {
            w.write_record([
                c.realization_seed.to_string(),
                c.pair_seed.to_string(),
                opt(c.lambda),
                c.error.clone().unwrap_or_default(),
            ])?;
        }
        finish(w, &path)?;
        artifacts.push("cells.csv".into());
        let xs: Vec<f64> = cells.iter().filter_map(|c| c.lambda).collect();
        if !xs.is_empty() {
            write_lambda_hist(&dir.join("lambda_hist.csv"), &xs, LAMBDA_HIST_BINS)?;
            artifacts.push("lambda_hist.csv".into());
        }
    }
    if out.wants(OutputFormat::Json) {
        write_json_atomic(&dir.join("summary.json"), &lambda_summary(&cells))?;
        artifacts.push("summary.json".into());
    }
    Ok(PipelineOutcome {
        derived_seeds,
        jobs,
        failures,
        artifacts,
    })
}

pub(crate) fn sweep_spec(cfg: &ExperimentConfig) -> SweepSpec {
    SweepSpec {
        params: MblParams {
            sites: cfg.model.sites,
            disorder_strength: 0.0,
            hopping: cfg.model.hopping,
            interaction: cfg.model.interaction,
            gamma: cfg.model.gamma,
        },
        w_grid: cfg.model.w_grid.clone(),
        n_disorder: cfg.sampling.n_disorder,
        n_traj: cfg.sampling.n_traj,
        observable: cfg.lyapunov.observable,
        dt: cfg.trajectory.dt,
        transient_time: cfg.trajectory.transient_time,
        lyapunov: cfg.lyapunov.to_config(),
        master_seed: cfg.sampling.master_seed,
    }
}

fn le_sweep(cfg: &ExperimentConfig, dir: &Path) -> Result<PipelineOutcome> {
    let spec = sweep_spec(cfg);
    let keys = spec.keys();
    let (cells, jobs, failures) =
        run_cells(dir, keys.len(), |done, sink| crate::lyapunov::run_sweep_cells(&spec, done, sink))?;
    let mut derived_seeds = Vec::new();
    for d in 0..spec.n_disorder {
        derived_seeds.push(DerivedSeed {
            job: format!("disorder[{d}]"),
            seed: spec.disorder_seed(d),
        });
        if spec.observable == ObservableKind::GoeRandom {
            derived_seeds.push(DerivedSeed {
                job: format!("observable[{d}]"),
                seed: spec.observable_seed(d),
            });
        }
        for p in 0..spec.n_traj {
            derived_seeds.push(DerivedSeed {
                job: format!("pair[{d},{p}]"),
                seed: spec.pair_seed(d, p),
            });
        }
    }
    let rows = crate::lyapunov::aggregate_sweep(&spec.w_grid, &cells);
    let mut artifacts = vec![JOURNAL_FILE.to_string()];
    if cfg.output.wants(OutputFormat::Csv) {
        let path = dir.join("cells.csv");
        let mut w = csv_writer(&path)?;
        w.write_record(["W", "disorder_seed", "pair_seed", "lambda", "error"])?;
        for c in &cells {
            w.write_record([
                opt(c.w),
                c.realization_seed.to_string(),
                c.pair_seed.to_string(),
                opt(c.lambda),
                c.error.clone().unwrap_or_default(),
            ])?;
        }
        finish(w, &path)?;
        let path = dir.join("sweep.csv");
        let mut w = csv_writer(&path)?;
        w.write_record(["W", "mean_lambda", "stderr", "n_cells"])?;
        for r in &rows {
            w.write_record([r.w.to_string(), r.mean_lambda.to_string(), r.stderr.to_string(), r.n_cells.to_string()])?;
        }
        finish(w, &path)?;
        artifacts.extend(["cells.csv".to_string(), "sweep.csv".to_string()]);
    }
    if cfg.output.wants(OutputFormat::Json) {
        write_json_atomic(&dir.join("sweep.json"), &rows)?;
        artifacts.push("sweep.json".into());
    }
    Ok(PipelineOutcome {
        derived_seeds,
        jobs,
        failures,
        artifacts,
    })
}

/// Model of realization `d` at disorder `w`; the integrable chain ignores both.
pub(crate) fn build_model(cfg: &ExperimentConfig, w: f64, disorder_seed: u64) -> Result<LindbladModel> {
    let m = &cfg.model;
    match m.kind {
        ModelKind::Integrable => build_integrable_chain(m.sites, m.eta_b1, m.kappa, m.gamma),
        ModelKind::Mbl => {
            let params = MblParams {
                sites: m.sites,
                disorder_strength: w,
                hopping: m.hopping,
                interaction: m.interaction,
                gamma: m.gamma,
            };
            build_mbl_chain(&params, &sample_disorder(m.sites, disorder_seed))
        }
    }
}

fn observable(cfg: &ExperimentConfig, model: &LindbladModel, d: usize) -> ComplexOperator {
    match cfg.lyapunov.observable {
        ObservableKind::ModelHamiltonian => model.hamiltonian().clone(),
        ObservableKind::GoeRandom => sample_goe_observable(
            model.dim(),
            rng::job_seed(cfg.sampling.master_seed, d as u64, 0, Purpose::Observable),
        ),
    }
}

pub(crate) fn disorder_seed(cfg: &ExperimentConfig, d: usize) -> u64 {
    rng::job_seed(cfg.sampling.master_seed, d as u64, 0, Purpose::Disorder)
}

/// Cached spectrum of one `(W, realization)` cell. The sidecar is written
/// last and doubles as the completion marker.
fn cached_spectrum(cfg: &ExperimentConfig, dir: &Path, w: f64, d: usize) -> Result<(Spectrum, bool)> {
    let seed = disorder_seed(cfg, d);
    let stem = format!("{}_d{d}", w_tag(w));
    let csv_path = dir.join("spectra").join(format!("{stem}.csv"));
    let side_path = dir.join("spectra").join(format!("{stem}.json"));
    let model = build_model(cfg, w, seed)?;
    let sidecar = SpectrumSidecar {
        model_label: model.label().to_string(),
        seed: (cfg.model.kind == ModelKind::Mbl).then_some(seed),
        sites: cfg.model.sites,
        disorder_strength: (cfg.model.kind == ModelKind::Mbl).then_some(w),
        gamma: cfg.model.gamma,
    };
    if side_path.exists() && csv_path.exists() {
        let f = File::open(&side_path).map_err(|e| Error::io(&side_path, e))?;
        if let Ok(prev) = serde_json::from_reader::<_, SpectrumSidecar>(std::io::BufReader::new(f)) {
            if prev == sidecar {
                let mut s = Spectrum::read_csv(&csv_path, model.label())?;
                s.hilbert_dim = model.dim();
                return Ok((s, true));
            }
        }
    }
    let s = spectrum(&build_superoperator(&model)?, model.label())?;
    s.write_csv(&csv_path)?;
    write_json_atomic(&side_path, &sidecar)?;
    Ok((s, false))
}

/// Statistics of one pooled CSR sample set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CsrGroupSummary {
    pub label: String,
    pub w: Option<f64>,
    pub n_spectra: usize,
    pub n_samples: usize,
    pub n_degenerate: usize,
    pub mean_r: f64,
    pub mean_cos_theta: f64,
    pub disk_radius: f64,
    pub disk0_mass: f64,
    pub disk1_mass: f64,
    pub disk0_uniform_share: f64,
    pub disk1_uniform_share: f64,
}

impl CsrGroupSummary {
    pub fn disk0_ratio(&self) -> f64 {
        self.disk0_mass / self.disk0_uniform_share
    }

    pub fn disk1_ratio(&self) -> f64 {
        self.disk1_mass / self.disk1_uniform_share
    }
}

pub fn csr_group_summary(label: &str, w: Option<f64>, n_spectra: usize, samples: &[CsrSample]) -> Result<CsrGroupSummary> {
    let s = summary_stats(samples)?;
    let (c0, c1) = (C64::new(0.0, 0.0), C64::new(1.0, 0.0));
    Ok(CsrGroupSummary {
        label: label.to_string(),
        w,
        n_spectra,
        n_samples: s.n_samples,
        n_degenerate: s.n_degenerate,
        mean_r: s.mean_r,
        mean_cos_theta: s.mean_cos_theta,
        disk_radius: DISK_RADIUS,
        disk0_mass: disk_mass(samples, c0, DISK_RADIUS),
        disk1_mass: disk_mass(samples, c1, DISK_RADIUS),
        disk0_uniform_share: uniform_disk_share(c0, DISK_RADIUS),
        disk1_uniform_share: uniform_disk_share(c1, DISK_RADIUS),
    })
}

/// Histogram, marginals, stripe section and summary of one sample set,
/// written as `{kind}_{tag}.{csv,json}`.
fn write_csr_tables(
    cfg: &ExperimentConfig,
    dir: &Path,
    tag: &str,
    summary: &CsrGroupSummary,
    samples: &[CsrSample],
    artifacts: &mut Vec<String>,
) -> Result<()> {
    let c = &cfg.csr;
    if cfg.output.wants(OutputFormat::Csv) {
        let name = format!("csr_hist_{tag}.csv");
        csr_histogram(samples, c.bins)?.write_csv(dir.join(&name))?;
        artifacts.push(name);
        let name = format!("radial_{tag}.csv");
        radial_marginal(samples, c.marginal_bins)?.write_csv(dir.join(&name))?;
        artifacts.push(name);
        let name = format!("angular_{tag}.csv");
        angular_marginal(samples, c.marginal_bins)?.write_csv(dir.join(&name))?;
        artifacts.push(name);
        match real_axis_section(samples, c.stripe_halfwidth, c.section_bins) {
            Ok(sec) => {
                let name = format!("section_{tag}.csv");
                let path = dir.join(&name);
                let mut w = csv_writer(&path)?;
                w.write_record(["bin_left", "bin_right", "density", "uniform_density"])?;
                for i in 0..sec.bins() {
                    w.write_record([
                        sec.left(i).to_string(),
                        sec.left(i + 1).to_string(),
                        sec.density[i].to_string(),
                        csr::uniform_section_density(sec.center(i), c.stripe_halfwidth).to_string(),
                    ])?;
                }
                finish(w, &path)?;
                artifacts.push(name);
            }
            Err(Error::Empty(_)) => {}
            Err(e) => return Err(e),
        }
    }
    if cfg.output.wants(OutputFormat::Json) {
        let name = format!("summary_{tag}.json");
        write_json_atomic(&dir.join(&name), summary)?;
        artifacts.push(name);
    }
    Ok(())
}

fn csr_experiment(cfg: &ExperimentConfig, dir: &Path) -> Result<PipelineOutcome> {
    fs::create_dir_all(dir.join("spectra")).map_err(|e| Error::io(dir.join("spectra"), e))?;
    let grid = &cfg.model.w_grid;
    let n = cfg.sampling.n_disorder;
    let jobs_list: Vec<(usize, usize)> = (0..grid.len()).flat_map(|g| (0..n).map(move |d| (g, d))).collect();
    let resumed = AtomicUsize::new(0);
    let results: Vec<((usize, usize), std::result::Result<Spectrum, String>)> = jobs_list
        .par_iter()
        .map(|&(g, d)| {
            let r = cached_spectrum(cfg, dir, grid[g], d).map(|(s, hit)| {
                if hit {
                    resumed.fetch_add(1, Ordering::Relaxed);
                }
                s
            });
            ((g, d), r.map_err(|e| e.to_string()))
        })
        .collect();

    let mut failures = Vec::new();
    let mut by_w: BTreeMap<usize, Vec<Spectrum>> = BTreeMap::new();
    let mut artifacts = Vec::new();
    for ((g, d), r) in results {
        match r {
            Ok(s) => {
                let stem = format!("spectra/{}_d{d}", w_tag(grid[g]));
                artifacts.push(format!("{stem}.csv"));
                artifacts.push(format!("{stem}.json"));
                by_w.entry(g).or_default().push(s);
            }
            Err(e) => failures.push(JobFailure {
                job: format!("spectrum {} realization={d}", w_tag(grid[g])),
                error: e,
            }),
        }
    }

    let mut summaries = Vec::new();
    for (g, &w) in grid.iter().enumerate() {
        let tag = w_tag(w);
        let Some(spectra) = by_w.get(&g) else { continue };
        let (samples, _) = pooled_csr(spectra)?;
        match csr_group_summary(&tag, Some(w), spectra.len(), &samples) {
            Ok(summary) => {
                write_csr_tables(cfg, dir, &tag, &summary, &samples, &mut artifacts)?;
                summaries.push(summary);
            }
            Err(e) => failures.push(JobFailure {
                job: format!("csr {tag}"),
                error: e.to_string(),
            }),
        }
    }

    let mut derived_seeds: Vec<DerivedSeed> = if cfg.model.kind == ModelKind::Mbl {
        (0..n)
            .map(|d| DerivedSeed {
                job: format!("disorder[{d}]"),
                seed: disorder_seed(cfg, d),
            })
            .collect()
    } else {
        Vec::new()
    };
    for (e, &ens) in cfg.csr.reference.iter().enumerate() {
        let name = match ens {
            ReferenceEnsemble::Ginue => "ginue",
            ReferenceEnsemble::Poisson => "poisson",
        };
        let count = match ens {
            ReferenceEnsemble::Ginue => cfg.csr.ginue_count,
            ReferenceEnsemble::Poisson => cfg.csr.poisson_count,
        };
        let seeds: Vec<u64> = (0..count)
            .map(|i| rng::derive_seed(cfg.sampling.master_seed, &[Purpose::Reference as u64, e as u64, i as u64]))
            .collect();
        derived_seeds.extend(seeds.iter().enumerate().map(|(i, &seed)| DerivedSeed {
            job: format!("reference_{name}[{i}]"),
            seed,
        }));
        let spectra: Vec<Spectrum> = seeds
            .par_iter()
            .map(|&seed| match ens {
                ReferenceEnsemble::Ginue => csr::sample_ginue(cfg.csr.ginue_size, seed),
                ReferenceEnsemble::Poisson => csr::sample_poisson_points(cfg.csr.poisson_size, seed),
            })
            .collect::<Result<_>>()?;
        let (samples, _) = pooled_csr(&spectra)?;
        let tag = format!("ref_{name}");
        let summary = csr_group_summary(&tag, None, spectra.len(), &samples)?;
        write_csr_tables(cfg, dir, &tag, &summary, &samples, &mut artifacts)?;
        summaries.push(summary);
    }

    if cfg.output.wants(OutputFormat::Csv) {
        let path = dir.join("csr_summary.csv");
        let mut w = csv_writer(&path)?;
        w.write_record([
            "label",
            "n_spectra",
            "n_samples",
            "n_degenerate",
            "mean_r",
            "mean_cos_theta",
            "disk0_ratio",
            "disk1_ratio",
        ])?;
        for s in &summaries {
            w.write_record([
                s.label.clone(),
                s.n_spectra.to_string(),
                s.n_samples.to_string(),
                s.n_degenerate.to_string(),
                s.mean_r.to_string(),
                s.mean_cos_theta.to_string(),
                s.disk0_ratio().to_string(),
                s.disk1_ratio().to_string(),
            ])?;
        }
        finish(w, &path)?;
        artifacts.push("csr_summary.csv".into());
    }

    let jobs = JobSummary {
        total: jobs_list.len(),
        completed: jobs_list.len() - failures.iter().filter(|f| f.job.starts_with("spectrum")).count(),
        failed: failures.len(),
        resumed: resumed.into_inner(),
    };
    Ok(PipelineOutcome {
        derived_seeds,
        jobs,
        failures,
        artifacts,
    })
}

/// Per-pair exponent of a traced run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TracedPair {
    pub pair: usize,
    pub pair_seed: u64,
    pub lambda: Option<f64>,
    pub error: Option<String>,
}

fn trajectory_trace(cfg: &ExperimentConfig, dir: &Path) -> Result<PipelineOutcome> {
    let w = cfg.model.w_grid.first().copied().unwrap_or(0.0);
    let master = cfg.sampling.master_seed;
    let d_seed = disorder_seed(cfg, 0);
    let model = build_model(cfg, w, d_seed)?;
    let o = observable(cfg, &model, 0);
    let psi0 = neel_state(model.basis())?;
    let eng = Unraveler::new(&model, cfg.trajectory.dt)?;
    let stride = cfg.trajectory.trace_stride;
    let trace_seed = rng::job_seed(master, 0, 0, Purpose::JumpNoise);
    let rows = trace_trajectory(
        &eng,
        &psi0,
        &o,
        cfg.trajectory.transient_time + cfg.trajectory.run_time,
        stride,
        JumpNoise::new(trace_seed),
    )?;

    let lcfg = cfg.lyapunov.to_config();
    let pairs: Vec<(TracedPair, Vec<crate::lyapunov::DistanceRow>)> = (0..cfg.sampling.n_traj)
        .into_par_iter()
        .map(|p| {
            let pair_seed = rng::job_seed(master, 0, p as u64, Purpose::Pair);
            match estimate_le_traced(
                &eng,
                &o,
                &psi0,
                cfg.trajectory.transient_time,
                &lcfg,
                PairSeeds::from_pair(pair_seed),
                model.label(),
                stride,
            ) {
                Ok((est, rows)) => (
                    TracedPair {
                        pair: p,
                        pair_seed,
                        lambda: Some(est.lambda),
                        error: None,
                    },
                    rows,
                ),
                Err(e) => (
                    TracedPair {
                        pair: p,
                        pair_seed,
                        lambda: None,
                        error: Some(e.to_string()),
                    },
                    Vec::new(),
                ),
            }
        })
        .collect();

    let mut artifacts = Vec::new();
    if cfg.output.wants(OutputFormat::Csv) {
        let path = dir.join("trace.csv");
        let mut wr = csv_writer(&path)?;
        wr.write_record(["t", "norm_sq", "o_t", "jump_flag"])?;
        for r in &rows {
            wr.write_record([r.t.to_string(), r.norm_sq.to_string(), r.o_t.to_string(), u8::from(r.jump_flag).to_string()])?;
        }
        finish(wr, &path)?;
        let path = dir.join("distance.csv");
        let mut wr = csv_writer(&path)?;
        wr.write_record(["pair", "t", "distance", "base_jump", "perturbed_jump", "renorm"])?;
        for (tp, rows) in &pairs {
            for r in rows {
                wr.write_record([
                    tp.pair.to_string(),
                    r.t.to_string(),
                    r.distance.to_string(),
                    u8::from(r.base_jump).to_string(),
                    u8::from(r.perturbed_jump).to_string(),
                    u8::from(r.renorm).to_string(),
                ])?;
            }
        }
        finish(wr, &path)?;
        artifacts.extend(["trace.csv".to_string(), "distance.csv".to_string()]);
    }
    if cfg.output.wants(OutputFormat::Json) {
        let tps: Vec<&TracedPair> = pairs.iter().map(|(t, _)| t).collect();
        write_json_atomic(&dir.join("pairs.json"), &tps)?;
        artifacts.push("pairs.json".into());
    }

    let failures: Vec<JobFailure> = pairs
        .iter()
        .filter_map(|(t, _)| {
            t.error.as_ref().map(|e| JobFailure {
                job: format!("pair={}", t.pair),
                error: e.clone(),
            })
        })
        .collect();
    let mut derived_seeds = vec![DerivedSeed {
        job: "trace_noise".into(),
        seed: trace_seed,
    }];
    if cfg.model.kind == ModelKind::Mbl {
        derived_seeds.push(DerivedSeed {
            job: "disorder[0]".into(),
            seed: d_seed,
        });
    }
    derived_seeds.extend(pairs.iter().map(|(t, _)| DerivedSeed {
        job: format!("pair[0,{}]", t.pair),
        seed: t.pair_seed,
    }));
    Ok(PipelineOutcome {
        derived_seeds,
        jobs: JobSummary {
            total: pairs.len() + 1,
            completed: pairs.len() + 1 - failures.len(),
            failed: failures.len(),
            resumed: 0,
        },
        failures,
        artifacts,
    })
}

/// Ensemble-vs-master-equation comparison of one realization.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UnravelingRealization {
    pub realization: usize,
    pub model_label: String,
    pub trace_distance: f64,
    pub trace_distance_quarter: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UnravelingReport {
    pub t: f64,
    pub dt: f64,
    pub n_trajectories: usize,
    pub n_quarter: usize,
    pub realizations: Vec<UnravelingRealization>,
    /// Mean over realizations at `n_trajectories`.
    pub trace_distance: f64,
    pub max_trace_distance: f64,
    pub trace_distance_quarter: f64,
    /// Quarter-size error over full-size error; `~2` for `1/√n` scaling.
    pub ratio: f64,
}

/// Compares `n_traj` trajectory snapshots at `t = run_time` with the
/// master-equation solution, and repeats with `n_traj / 4` trajectories on
/// an independent noise branch. Each of the `n_disorder` realizations gets
/// its own disorder and noise.
pub fn unraveling_report(cfg: &ExperimentConfig) -> Result<UnravelingReport> {
    let w = cfg.model.w_grid.first().copied().unwrap_or(0.0);
    let t = cfg.trajectory.run_time;
    let dt = cfg.trajectory.dt;
    let n = cfg.sampling.n_traj;
    let nq = (n / 4).max(1);
    let master = cfg.sampling.master_seed;
    let realizations = (0..cfg.sampling.n_disorder)
        .map(|d| -> Result<UnravelingRealization> {
            let model = build_model(cfg, w, disorder_seed(cfg, d))?;
            let psi0 = neel_state(model.basis())?;
            let exact = evolve_density(&model, &DensityMatrix::from_pure(&psi0)?, t, dt)?;
            let err = |count: usize, branch: u64| -> Result<f64> {
                let seed = rng::job_seed(master, d as u64, branch, Purpose::Ensemble);
                let states: Vec<PureState> = unravel_ensemble(&model, &psi0, t, count, dt, seed)?;
                trace_distance(&ensemble_average(&states)?, &exact)
            };
            Ok(UnravelingRealization {
                realization: d,
                model_label: model.label().to_string(),
                trace_distance: err(n, 0)?,
                trace_distance_quarter: err(nq, 1)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let full: Vec<f64> = realizations.iter().map(|r| r.trace_distance).collect();
    let quarter: Vec<f64> = realizations.iter().map(|r| r.trace_distance_quarter).collect();
    let (m_full, m_quarter) = (mean(&full), mean(&quarter));
    Ok(UnravelingReport {
        t,
        dt,
        n_trajectories: n,
        n_quarter: nq,
        max_trace_distance: full.iter().copied().fold(0.0, f64::max),
        trace_distance: m_full,
        trace_distance_quarter: m_quarter,
        ratio: m_quarter / m_full,
        realizations,
    })
}

fn unraveling_check(cfg: &ExperimentConfig, dir: &Path) -> Result<PipelineOutcome> {
    let report = unraveling_report(cfg)?;
    write_json_atomic(&dir.join("unraveling_check.json"), &report)?;
    let master = cfg.sampling.master_seed;
    let mut derived_seeds = Vec::new();
    for d in 0..cfg.sampling.n_disorder {
        if cfg.model.kind == ModelKind::Mbl {
            derived_seeds.push(DerivedSeed {
                job: format!("disorder[{d}]"),
                seed: disorder_seed(cfg, d),
            });
        }
        for (branch, name) in [(0, "full"), (1, "quarter")] {
            derived_seeds.push(DerivedSeed {
                job: format!("ensemble_{name}[{d}]"),
                seed: rng::job_seed(master, d as u64, branch, Purpose::Ensemble),
            });
        }
    }
    let n = cfg.sampling.n_disorder;
    Ok(PipelineOutcome {
        derived_seeds,
        jobs: JobSummary {
            total: n,
            completed: n,
            failed: 0,
            resumed: 0,
        },
        failures: Vec::new(),
        artifacts: vec!["unraveling_check.json".into()],
    })
}
