//! TOML experiment configs.
//!
//! Parsing is two-pass: the raw table is first walked against the schema so
//! every unknown key is reported at once, then each section is deserialized
//! and the resolved config is validated, again collecting every issue.

use std::path::PathBuf;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::lyapunov::{LyapunovConfig, ObservableKind, RenormDirection};
use crate::models::{MAX_FERMION_SITES, MAX_SPIN_SITES};
use crate::liouville::MAX_SUPEROPERATOR_DIM;
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    LeDistribution,
    LeSweep,
    CsrExperiment,
    TrajectoryTrace,
    UnravelingCheck,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::LeDistribution => "le_distribution",
            Self::LeSweep => "le_sweep",
            Self::CsrExperiment => "csr_experiment",
            Self::TrajectoryTrace => "trajectory_trace",
            Self::UnravelingCheck => "unraveling_check",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Mbl,
    Integrable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceEnsemble {
    Ginue,
    Poisson,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub sites: usize,
    pub w_grid: Vec<f64>,
    pub hopping: f64,
    pub interaction: f64,
    pub gamma: f64,
    pub eta_b1: f64,
    pub kappa: f64,
}

impl ModelConfig {
    pub fn hilbert_dim(&self) -> usize {
        match self.kind {
            ModelKind::Integrable => 1usize << self.sites.min(63),
            ModelKind::Mbl => binomial(self.sites, self.sites / 2),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySection {
    pub dt: f64,
    pub transient_time: f64,
    pub run_time: f64,
    pub trace_stride: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovSection {
    pub delta0: f64,
    pub tau: f64,
    pub n_renorms: usize,
    pub observable: ObservableKind,
    pub renorm_direction: RenormDirection,
    pub bisect_tol: f64,
    pub bisect_max_iter: usize,
}

impl LyapunovSection {
    pub fn to_config(&self) -> LyapunovConfig {
        LyapunovConfig {
            delta0: self.delta0,
            tau: self.tau,
            n_renorms: self.n_renorms,
            bisect_tol: self.bisect_tol,
            bisect_max_iter: self.bisect_max_iter,
            renorm_direction: self.renorm_direction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsrSection {
    pub bins: usize,
    pub marginal_bins: usize,
    pub section_bins: usize,
    pub stripe_halfwidth: f64,
    pub reference: Vec<ReferenceEnsemble>,
    /// Matrix size and number of GinUE samples.
    pub ginue_size: usize,
    pub ginue_count: usize,
    /// Points per Poisson sample and number of samples.
    pub poisson_size: usize,
    pub poisson_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingSection {
    pub n_disorder: usize,
    pub n_traj: usize,
    pub master_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputSection {
    pub directory: PathBuf,
    pub formats: Vec<OutputFormat>,
}

impl OutputSection {
    pub fn wants(&self, f: OutputFormat) -> bool {
        self.formats.contains(&f)
    }
}

/// Fully resolved and validated experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub experiment: ExperimentKind,
    pub model: ModelConfig,
    pub trajectory: TrajectorySection,
    pub lyapunov: LyapunovSection,
    pub csr: CsrSection,
    pub sampling: SamplingSection,
    pub output: OutputSection,
}

#[derive(Debug, Default, Deserialize)]
struct RawModel {
    kind: Option<ModelKind>,
    sites: Option<usize>,
    w: Option<f64>,
    w_grid: Option<Vec<f64>>,
    hopping: Option<f64>,
    interaction: Option<f64>,
    gamma: Option<f64>,
    eta: Option<f64>,
    kappa: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
struct RawTrajectory {
    dt: Option<f64>,
    transient_time: Option<f64>,
    run_time: Option<f64>,
    trace_stride: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
struct RawLyapunov {
    delta0: Option<f64>,
    tau: Option<f64>,
    n_renorms: Option<usize>,
    observable: Option<ObservableKind>,
    renorm_direction: Option<RenormDirection>,
    bisect_tol: Option<f64>,
    bisect_max_iter: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
struct RawCsr {
    bins: Option<usize>,
    marginal_bins: Option<usize>,
    section_bins: Option<usize>,
    stripe_halfwidth: Option<f64>,
    reference: Option<Vec<ReferenceEnsemble>>,
    ginue_size: Option<usize>,
    ginue_count: Option<usize>,
    poisson_size: Option<usize>,
    poisson_count: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
struct RawSampling {
    n_disorder: Option<usize>,
    n_traj: Option<usize>,
    master_seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
struct RawOutput {
    directory: Option<PathBuf>,
    formats: Option<Vec<OutputFormat>>,
}

const TOP_KEYS: &[&str] = &[
    "schema_version",
    "experiment",
    "model",
    "trajectory",
    "lyapunov",
    "csr",
    "sampling",
    "output",
];

fn section_keys(section: &str) -> &'static [&'static str] {
    match section {
        "model" => &["kind", "sites", "w", "w_grid", "hopping", "interaction", "gamma", "eta", "kappa"],
        "trajectory" => &["dt", "transient_time", "run_time", "trace_stride"],
        "lyapunov" => &[
            "delta0",
            "tau",
            "n_renorms",
            "observable",
            "renorm_direction",
            "bisect_tol",
            "bisect_max_iter",
        ],
        "csr" => &[
            "bins",
            "marginal_bins",
            "section_bins",
            "stripe_halfwidth",
            "reference",
            "ginue_size",
            "ginue_count",
            "poisson_size",
            "poisson_count",
        ],
        "sampling" => &["n_disorder", "n_traj", "master_seed"],
        "output" => &["directory", "formats"],
        _ => &[],
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn section<T: DeserializeOwned + Default>(table: &toml::Table, name: &str, issues: &mut Vec<String>) -> T {
    match table.get(name) {
        None => T::default(),
        Some(v) => match v.clone().try_into::<T>() {
            Ok(t) => t,
            Err(e) => {
                issues.push(format!("[{name}]: {}", e.message().trim()));
                T::default()
            }
        },
    }
}

/// Parses and validates a config, reporting every problem found.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let table: toml::Table = toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| line_of(text, s.start));
        match line {
            Some(l) => Error::Config(format!("syntax error at line {l}: {}", e.message().trim())),
            None => Error::Config(format!("syntax error: {}", e.message().trim())),
        }
    })?;

    let mut issues = Vec::new();
    for (k, v) in &table {
        if !TOP_KEYS.contains(&k.as_str()) {
            issues.push(format!("unknown key `{k}`"));
            continue;
        }
        let allowed = section_keys(k);
        if allowed.is_empty() {
            continue;
        }
        match v {
            toml::Value::Table(t) => {
                for sk in t.keys() {
                    if !allowed.contains(&sk.as_str()) {
                        issues.push(format!("unknown key `{k}.{sk}`"));
                    }
                }
            }
            _ => issues.push(format!("`{k}` must be a table")),
        }
    }

    let schema_version = match table.get("schema_version") {
        Some(toml::Value::Integer(v)) => Some(*v),
        Some(_) => {
            issues.push("`schema_version` must be an integer".into());
            None
        }
        None => {
            issues.push("missing `schema_version`".into());
            None
        }
    };
    if let Some(v) = schema_version {
        if v != SCHEMA_VERSION as i64 {
            issues.push(format!("unsupported schema_version {v} (expected {SCHEMA_VERSION})"));
        }
    }
    let experiment: Option<ExperimentKind> = match table.get("experiment") {
        Some(v) => match v.clone().try_into() {
            Ok(k) => Some(k),
            Err(_) => {
                issues.push(format!(
                    "`experiment` must be one of le_distribution, le_sweep, csr_experiment, trajectory_trace, unraveling_check; got {v}"
                ));
                None
            }
        },
        None => {
            issues.push("missing `experiment`".into());
            None
        }
    };

    let model: RawModel = section(&table, "model", &mut issues);
    let traj: RawTrajectory = section(&table, "trajectory", &mut issues);
    let lyap: RawLyapunov = section(&table, "lyapunov", &mut issues);
    let csr: RawCsr = section(&table, "csr", &mut issues);
    let sampling: RawSampling = section(&table, "sampling", &mut issues);
    let output: RawOutput = section(&table, "output", &mut issues);

    let (Some(experiment), true) = (experiment, issues.is_empty()) else {
        return Err(Error::ConfigIssues(issues));
    };
    let cfg = resolve(experiment, model, traj, lyap, csr, sampling, output, &mut issues);
    validate(&cfg, &mut issues);
    if issues.is_empty() {
        Ok(cfg)
    } else {
        Err(Error::ConfigIssues(issues))
    }
}

pub fn load_config(path: impl AsRef<std::path::Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}

#[allow(clippy::too_many_arguments)]
fn resolve(
    experiment: ExperimentKind,
    m: RawModel,
    t: RawTrajectory,
    l: RawLyapunov,
    c: RawCsr,
    s: RawSampling,
    o: RawOutput,
    issues: &mut Vec<String>,
) -> ExperimentConfig {
    let kind = m.kind.unwrap_or(match experiment {
        ExperimentKind::LeDistribution => ModelKind::Integrable,
        _ => ModelKind::Mbl,
    });
    let integrable = kind == ModelKind::Integrable;
    let w_grid = match (m.w, m.w_grid) {
        (Some(_), Some(_)) => {
            issues.push("model: give either `w` or `w_grid`, not both".into());
            Vec::new()
        }
        (Some(w), None) => vec![w],
        (None, Some(g)) => g,
        (None, None) if integrable => vec![0.0],
        (None, None) => {
            issues.push("model.w: disorder strength (`w` or `w_grid`) is required for the mbl model".into());
            Vec::new()
        }
    };
    let sites = m.sites.unwrap_or_else(|| {
        issues.push("model.sites: required".into());
        0
    });
    let delta0 = l.delta0.unwrap_or(1e-6);
    ExperimentConfig {
        schema_version: SCHEMA_VERSION,
        experiment,
        model: ModelConfig {
            kind,
            sites,
            w_grid,
            hopping: m.hopping.unwrap_or(1.0),
            interaction: m.interaction.unwrap_or(1.0),
            gamma: m.gamma.unwrap_or(if integrable { 1.0 } else { 0.1 }),
            eta_b1: m.eta.unwrap_or(1.0),
            kappa: m.kappa.unwrap_or(-1.0),
        },
        trajectory: TrajectorySection {
            dt: t.dt.unwrap_or(crate::unravel::DEFAULT_DT),
            transient_time: t.transient_time.unwrap_or(if integrable { 100.0 } else { 1000.0 }),
            run_time: t.run_time.unwrap_or(10.0),
            trace_stride: t.trace_stride.unwrap_or(1),
        },
        lyapunov: LyapunovSection {
            delta0,
            tau: l.tau.unwrap_or(if integrable { 5.0 } else { 10.0 }),
            n_renorms: l.n_renorms.unwrap_or(if integrable { 100 } else { 1000 }),
            observable: l.observable.unwrap_or(if integrable {
                ObservableKind::GoeRandom
            } else {
                ObservableKind::ModelHamiltonian
            }),
            renorm_direction: l.renorm_direction.unwrap_or(RenormDirection::Difference),
            bisect_tol: l.bisect_tol.unwrap_or(1e-3 * delta0),
            bisect_max_iter: l.bisect_max_iter.unwrap_or(200),
        },
        csr: CsrSection {
            bins: c.bins.unwrap_or(50),
            marginal_bins: c.marginal_bins.unwrap_or(50),
            section_bins: c.section_bins.unwrap_or(40),
            stripe_halfwidth: c.stripe_halfwidth.unwrap_or(0.05),
            reference: c.reference.unwrap_or_default(),
            ginue_size: c.ginue_size.unwrap_or(500),
            ginue_count: c.ginue_count.unwrap_or(20),
            poisson_size: c.poisson_size.unwrap_or(100_000),
            poisson_count: c.poisson_count.unwrap_or(1),
        },
        sampling: SamplingSection {
            n_disorder: s.n_disorder.unwrap_or(10),
            n_traj: s.n_traj.unwrap_or(20),
            master_seed: s.master_seed.unwrap_or(0),
        },
        output: OutputSection {
            directory: o.directory.unwrap_or_else(|| PathBuf::from("out")),
            formats: o.formats.unwrap_or_else(|| vec![OutputFormat::Csv, OutputFormat::Json]),
        },
    }
}

fn validate(cfg: &ExperimentConfig, issues: &mut Vec<String>) {
    let m = &cfg.model;
    let mut bad = |field: &str, msg: String| issues.push(format!("{field}: {msg}"));
    let positive = |x: f64| x > 0.0 && x.is_finite();

    match m.kind {
        ModelKind::Mbl => {
            if m.sites < 2 || !m.sites.is_multiple_of(2) {
                bad("model.sites", format!("mbl chain needs an even number of sites >= 2, got {}", m.sites));
            } else if m.sites > MAX_FERMION_SITES {
                bad("model.sites", format!("{} exceeds the {MAX_FERMION_SITES}-site limit", m.sites));
            }
            if m.w_grid.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
                bad("model.w", "disorder strengths must be finite and >= 0".into());
            }
            if cfg.experiment == ExperimentKind::LeSweep && m.w_grid.is_empty() {
                bad("model.w_grid", "must not be empty".into());
            }
        }
        ModelKind::Integrable => {
            if m.sites < 2 || m.sites > MAX_SPIN_SITES {
                bad("model.sites", format!("integrable chain needs 2..={MAX_SPIN_SITES} sites, got {}", m.sites));
            }
            for (name, v) in [("model.eta", m.eta_b1), ("model.kappa", m.kappa)] {
                if v != 1.0 && v != -1.0 {
                    bad(name, format!("must be +1 or -1, got {v}"));
                }
            }
        }
    }
    if !positive(m.gamma) {
        bad("model.gamma", format!("must be positive, got {}", m.gamma));
    }
    if !(m.hopping.is_finite() && m.interaction.is_finite()) {
        bad("model.hopping", "hopping and interaction must be finite".into());
    }

    match (cfg.experiment, m.kind) {
        (ExperimentKind::LeDistribution, ModelKind::Mbl) => {
            bad("model.kind", "le_distribution runs on the integrable model".into())
        }
        (ExperimentKind::LeSweep, ModelKind::Integrable) => {
            bad("model.kind", "le_sweep runs on the mbl model".into())
        }
        _ => {}
    }
    let needs_superop = matches!(
        cfg.experiment,
        ExperimentKind::CsrExperiment | ExperimentKind::UnravelingCheck
    );
    let sites_ok = match m.kind {
        ModelKind::Mbl => m.sites >= 2 && m.sites.is_multiple_of(2) && m.sites <= MAX_FERMION_SITES,
        ModelKind::Integrable => (2..=MAX_SPIN_SITES).contains(&m.sites),
    };
    if needs_superop && sites_ok {
        let d = m.hilbert_dim();
        if d * d > MAX_SUPEROPERATOR_DIM {
            bad(
                "model.sites",
                format!("superoperator dimension {} exceeds {MAX_SUPEROPERATOR_DIM}", d * d),
            );
        }
    }
    if cfg.experiment != ExperimentKind::LeSweep && cfg.experiment != ExperimentKind::CsrExperiment && m.w_grid.len() > 1 {
        bad("model.w_grid", format!("{} takes a single `w`", cfg.experiment.name()));
    }

    let t = &cfg.trajectory;
    if !positive(t.dt) {
        bad("trajectory.dt", format!("must be positive, got {}", t.dt));
    }
    if !(t.transient_time >= 0.0 && t.transient_time.is_finite()) {
        bad("trajectory.transient_time", format!("must be >= 0, got {}", t.transient_time));
    }
    if !positive(t.run_time) {
        bad("trajectory.run_time", format!("must be positive, got {}", t.run_time));
    }
    if t.trace_stride == 0 {
        bad("trajectory.trace_stride", "must be at least 1".into());
    }

    let l = &cfg.lyapunov;
    if !positive(l.delta0) {
        bad("lyapunov.delta0", format!("must be positive, got {}", l.delta0));
    }
    if !positive(l.tau) {
        bad("lyapunov.tau", format!("must be positive, got {}", l.tau));
    } else if positive(t.dt) && t.dt > l.tau / 10.0 {
        bad("trajectory.dt", format!("must be <= tau/10 = {}", l.tau / 10.0));
    }
    if l.n_renorms == 0 {
        bad("lyapunov.n_renorms", "must be at least 1".into());
    }
    if !(l.bisect_tol > 0.0 && l.bisect_tol < l.delta0) {
        bad("lyapunov.bisect_tol", format!("must lie in (0, delta0), got {}", l.bisect_tol));
    }
    if l.bisect_max_iter == 0 {
        bad("lyapunov.bisect_max_iter", "must be at least 1".into());
    }

    let c = &cfg.csr;
    if c.bins < 2 {
        bad("csr.bins", format!("must be >= 2, got {}", c.bins));
    }
    if c.marginal_bins == 0 || c.section_bins == 0 {
        bad("csr.marginal_bins", "marginal and section bins must be >= 1".into());
    }
    if !(c.stripe_halfwidth > 0.0 && c.stripe_halfwidth <= 1.0) {
        bad("csr.stripe_halfwidth", format!("must lie in (0, 1], got {}", c.stripe_halfwidth));
    }
    for (name, size, count) in [
        ("ginue", c.ginue_size, c.ginue_count),
        ("poisson", c.poisson_size, c.poisson_count),
    ] {
        if size < 3 {
            bad(&format!("csr.{name}_size"), format!("must be >= 3, got {size}"));
        }
        if count == 0 {
            bad(&format!("csr.{name}_count"), "must be at least 1".into());
        }
    }

    let s = &cfg.sampling;
    if s.n_disorder == 0 {
        bad("sampling.n_disorder", "must be at least 1".into());
    }
    if s.n_traj == 0 {
        bad("sampling.n_traj", "must be at least 1".into());
    }
    if cfg.output.directory.as_os_str().is_empty() {
        bad("output.directory", "must not be empty".into());
    }
}

fn binomial(n: usize, k: usize) -> usize {
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}
