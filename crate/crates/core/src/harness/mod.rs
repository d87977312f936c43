//! Batch experiments: config, run manifest, resumable cell journal, output
//! pipelines and plot-data bundles.

pub mod checks;
pub mod config;
mod pipelines;
pub mod report;

use std::collections::BTreeSet;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::lyapunov::{CellKey, CellRecord};
use crate::{Error, Result};

pub use config::{load_config, parse_config, ExperimentConfig, ExperimentKind, ModelKind};
pub use report::emit_plot_data;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const JOURNAL_FILE: &str = "cells.jsonl";
/// Stack size of the worker pool built for `RunOptions::workers`.
pub const WORKER_STACK_BYTES: usize = 256 << 20;
pub const CODE_VERSION: &str = concat!("qchaos ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Completed,
    CompletedWithFailures,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DerivedSeed {
    pub job: String,
    pub seed: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobSummary {
    pub total: usize,
    pub completed: usize,
    pub failed: usize,
    pub resumed: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobFailure {
    pub job: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub code_version: String,
    pub config: ExperimentConfig,
    pub master_seed: u64,
    pub derived_seeds: Vec<DerivedSeed>,
    pub status: RunStatus,
    pub jobs: JobSummary,
    pub failures: Vec<JobFailure>,
    pub started_unix: f64,
    pub wall_clock_seconds: Option<f64>,
    /// Output files, relative to the output directory.
    pub artifacts: Vec<String>,
    pub error: Option<String>,
}

impl RunManifest {
    pub fn read(dir: impl AsRef<Path>) -> Result<Self> {
        let path = dir.as_ref().join(MANIFEST_FILE);
        let f = File::open(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_reader(BufReader::new(f))?)
    }

    /// Writes via a temporary file and rename, so a crash never leaves a
    /// half-written manifest.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        write_json_atomic(&dir.as_ref().join(MANIFEST_FILE), self)
    }
}

pub(crate) fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let tmp = path.with_extension("json.tmp");
    {
        let f = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        let mut w = BufWriter::new(f);
        serde_json::to_writer_pretty(&mut w, value)?;
        w.write_all(b"\n").map_err(|e| Error::io(&tmp, e))?;
        w.flush().map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Append-only log of finished cells, one JSON object per line.
pub struct Journal {
    path: PathBuf,
    writer: Mutex<BufWriter<File>>,
}

impl Journal {
    pub fn open(dir: &Path) -> Result<Self> {
        let path = dir.join(JOURNAL_FILE);
        let f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        Ok(Self {
            path,
            writer: Mutex::new(BufWriter::new(f)),
        })
    }

    /// Records that parse; a torn final line from an interrupted run is skipped.
    pub fn load(dir: &Path) -> Result<Vec<CellRecord>> {
        let path = dir.join(JOURNAL_FILE);
        if !path.exists() {
            return Ok(Vec::new());
        }
        let f = File::open(&path).map_err(|e| Error::io(&path, e))?;
        let mut out = Vec::new();
        for line in BufReader::new(f).lines() {
            let line = line.map_err(|e| Error::io(&path, e))?;
            if let Ok(rec) = serde_json::from_str::<CellRecord>(&line) {
                out.push(rec);
            }
        }
        Ok(out)
    }

    pub fn append(&self, rec: &CellRecord) -> Result<()> {
        let line = serde_json::to_string(rec)?;
        let mut w = self.writer.lock().expect("journal lock poisoned");
        writeln!(w, "{line}").map_err(|e| Error::io(&self.path, e))?;
        w.flush().map_err(|e| Error::io(&self.path, e))
    }
}

/// Successful journal records, last entry per key winning.
pub(crate) fn completed_cells(records: Vec<CellRecord>) -> Vec<CellRecord> {
    let mut by_key = std::collections::BTreeMap::new();
    for r in records.into_iter().filter(|r| r.lambda.is_some()) {
        by_key.insert(r.key, r);
    }
    by_key.into_values().collect()
}

pub(crate) fn done_set(cells: &[CellRecord]) -> BTreeSet<CellKey> {
    cells.iter().map(|c| c.key).collect()
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; `None` uses the global pool.
    pub workers: Option<usize>,
}

/// What a pipeline hands back to the orchestrator.
pub(crate) struct PipelineOutcome {
    pub derived_seeds: Vec<DerivedSeed>,
    pub jobs: JobSummary,
    pub failures: Vec<JobFailure>,
    pub artifacts: Vec<String>,
}

/// Model of realization `realization` at disorder `w`, seeded as in every
/// pipeline of this config.
pub fn model_for(cfg: &ExperimentConfig, w: f64, realization: usize) -> Result<crate::models::LindbladModel> {
    pipelines::build_model(cfg, w, pipelines::disorder_seed(cfg, realization))
}

pub use pipelines::{
    csr_group_summary, lambda_summary, unraveling_report, w_tag, CsrGroupSummary, LambdaSummary,
    UnravelingReport, DISK_RADIUS,
};

fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

/// Runs one experiment into `cfg.output.directory`.
///
/// A directory that already holds a manifest for the same config is resumed:
/// journaled cells and cached spectra are reused. A manifest for a different
/// config is refused rather than overwritten.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunManifest> {
    let dir = cfg.output.directory.clone();
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    if dir.join(MANIFEST_FILE).exists() {
        let prev = RunManifest::read(&dir)?;
        if prev.config != *cfg {
            return Err(Error::Config(format!(
                "{} holds a run with a different config; choose another output directory",
                dir.display()
            )));
        }
    }
    let started = Instant::now();
    let mut manifest = RunManifest {
        code_version: CODE_VERSION.to_string(),
        config: cfg.clone(),
        master_seed: cfg.sampling.master_seed,
        derived_seeds: Vec::new(),
        status: RunStatus::Running,
        jobs: JobSummary::default(),
        failures: Vec::new(),
        started_unix: unix_now(),
        wall_clock_seconds: None,
        artifacts: Vec::new(),
        error: None,
    };
    manifest.write(&dir)?;

    let run = || pipelines::dispatch(cfg, &dir);
    let result = match opts.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .stack_size(WORKER_STACK_BYTES)
            .build()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?
            .install(run),
        None => run(),
    };
    manifest.wall_clock_seconds = Some(started.elapsed().as_secs_f64());
    match result {
        Ok(out) => {
            manifest.derived_seeds = out.derived_seeds;
            manifest.status = if out.failures.is_empty() {
                RunStatus::Completed
            } else {
                RunStatus::CompletedWithFailures
            };
            manifest.jobs = out.jobs;
            manifest.failures = out.failures;
            let mut artifacts = out.artifacts;
            artifacts.sort();
            artifacts.dedup();
            manifest.artifacts = artifacts;
            manifest.write(&dir)?;
            Ok(manifest)
        }
        Err(e) => {
            manifest.status = RunStatus::Failed;
            manifest.error = Some(e.to_string());
            manifest.write(&dir)?;
            Err(e)
        }
    }
}
