//! Plot-ready bundles built from a finished run's artifacts.
//!
//! Each figure gets its CSV files under `plots/` plus a small JSON
//! descriptor naming the columns to put on each axis.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{ExperimentKind, ReferenceEnsemble};
use super::pipelines::{w_tag, write_lambda_hist, LAMBDA_HIST_BINS};
use super::{write_json_atomic, RunManifest, RunStatus};
use crate::lyapunov::{mean, std_dev};
use crate::{Error, Result};

pub const PLOTS_DIR: &str = "plots";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotSeries {
    pub file: String,
    pub label: String,
    pub x: String,
    pub y: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotDescriptor {
    pub figure: String,
    /// `histogram`, `line`, `errorbar` or `heatmap`.
    pub kind: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<PlotSeries>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalFit {
    pub mean: f64,
    pub sigma: f64,
    pub n: usize,
}

fn series(file: &str, label: &str, x: &str, y: &str) -> PlotSeries {
    PlotSeries {
        file: file.into(),
        label: label.into(),
        x: x.into(),
        y: y.into(),
        error: None,
    }
}

struct Bundle<'a> {
    run_dir: &'a Path,
    plots: PathBuf,
    manifest: &'a RunManifest,
    written: Vec<String>,
}

impl Bundle<'_> {
    fn source(&self, name: &str) -> Option<PathBuf> {
        let p = self.run_dir.join(name);
        (self.manifest.artifacts.iter().any(|a| a == name) && p.exists()).then_some(p)
    }

    fn copy(&mut self, from: &str, to: &str) -> Result<()> {
        let src = self.run_dir.join(from);
        let dst = self.plots.join(to);
        fs::copy(&src, &dst).map_err(|e| Error::io(&src, e))?;
        self.written.push(format!("{PLOTS_DIR}/{to}"));
        Ok(())
    }

    fn descriptor(&mut self, d: &PlotDescriptor) -> Result<()> {
        let name = format!("{}.json", d.figure);
        write_json_atomic(&self.plots.join(&name), d)?;
        self.written.push(format!("{PLOTS_DIR}/{name}"));
        Ok(())
    }
}

/// Artifacts a bundle needs, by experiment kind.
fn required(m: &RunManifest) -> Vec<String> {
    let cfg = &m.config;
    match cfg.experiment {
        ExperimentKind::LeDistribution => vec!["cells.csv".into()],
        ExperimentKind::LeSweep => vec!["sweep.csv".into()],
        ExperimentKind::CsrExperiment => {
            let mut tags: Vec<String> = cfg.model.w_grid.iter().map(|&w| w_tag(w)).collect();
            tags.extend(cfg.csr.reference.iter().map(|r| ref_tag(*r)));
            tags.iter()
                .flat_map(|t| ["csr_hist", "radial", "angular"].map(|k| format!("{k}_{t}.csv")))
                .collect()
        }
        ExperimentKind::TrajectoryTrace => vec!["trace.csv".into(), "distance.csv".into()],
        ExperimentKind::UnravelingCheck => vec!["unraveling_check.json".into()],
    }
}

fn ref_tag(r: ReferenceEnsemble) -> String {
    match r {
        ReferenceEnsemble::Ginue => "ref_ginue".into(),
        ReferenceEnsemble::Poisson => "ref_poisson".into(),
    }
}

/// Writes the figure bundles of a completed run and returns their paths
/// relative to the run directory.
pub fn emit_plot_data(manifest: &RunManifest) -> Result<Vec<String>> {
    let run_dir = manifest.config.output.directory.as_path();
    emit_plot_data_in(manifest, run_dir)
}

/// [`emit_plot_data`] for a run directory that has moved since the run.
pub fn emit_plot_data_in(manifest: &RunManifest, run_dir: &Path) -> Result<Vec<String>> {
    if matches!(manifest.status, RunStatus::Running | RunStatus::Failed) {
        return Err(Error::Config(format!(
            "run in {} is not complete (status {:?})",
            run_dir.display(),
            manifest.status
        )));
    }
    let missing: Vec<String> = required(manifest)
        .into_iter()
        .filter(|f| !(manifest.artifacts.contains(f) && run_dir.join(f).exists()))
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingArtifacts(missing));
    }
    let plots = run_dir.join(PLOTS_DIR);
    fs::create_dir_all(&plots).map_err(|e| Error::io(&plots, e))?;
    let mut b = Bundle {
        run_dir,
        plots,
        manifest,
        written: Vec::new(),
    };
    let cfg = &manifest.config;
    match cfg.experiment {
        ExperimentKind::LeDistribution => {
            let path = run_dir.join("cells.csv");
            let mut r = csv::Reader::from_path(&path)?;
            let mut xs = Vec::new();
            for rec in r.records() {
                let rec = rec?;
                if let Some(Ok(l)) = rec.get(2).filter(|s| !s.is_empty()).map(str::parse::<f64>) {
                    xs.push(l);
                }
            }
            if xs.is_empty() {
                return Err(Error::Empty("lambda samples"));
            }
            write_lambda_hist(&b.plots.join("fig1_hist.csv"), &xs, LAMBDA_HIST_BINS)?;
            b.written.push(format!("{PLOTS_DIR}/fig1_hist.csv"));
            let fit = NormalFit {
                mean: mean(&xs),
                sigma: std_dev(&xs),
                n: xs.len(),
            };
            write_json_atomic(&b.plots.join("fig1_normal_fit.json"), &fit)?;
            b.written.push(format!("{PLOTS_DIR}/fig1_normal_fit.json"));
            b.descriptor(&PlotDescriptor {
                figure: "fig1".into(),
                kind: "histogram".into(),
                x_label: "lambda".into(),
                y_label: "density".into(),
                series: vec![series("fig1_hist.csv", "lambda", "bin_left,bin_right", "density")],
            })?;
        }
        ExperimentKind::LeSweep => {
            let path = run_dir.join("sweep.csv");
            let mut r = csv::Reader::from_path(&path)?;
            let name = format!("fig3a_M{}.csv", cfg.model.sites);
            let out = b.plots.join(&name);
            let mut w = csv::Writer::from_path(&out)?;
            w.write_record(["W", "mean_lambda", "stderr"])?;
            for rec in r.records() {
                let rec = rec?;
                w.write_record([&rec[0], &rec[1], &rec[2]])?;
            }
            w.flush().map_err(|e| Error::io(&out, e))?;
            b.written.push(format!("{PLOTS_DIR}/{name}"));
            let mut s = series(&name, &format!("M={}", cfg.model.sites), "W", "mean_lambda");
            s.error = Some("stderr".into());
            b.descriptor(&PlotDescriptor {
                figure: "fig3a".into(),
                kind: "errorbar".into(),
                x_label: "W".into(),
                y_label: "lambda".into(),
                series: vec![s],
            })?;
        }
        ExperimentKind::CsrExperiment => {
            let mut tags: Vec<String> = cfg.model.w_grid.iter().map(|&w| w_tag(w)).collect();
            tags.extend(cfg.csr.reference.iter().map(|r| ref_tag(*r)));
            let mut hist = Vec::new();
            let mut radial = Vec::new();
            let mut angular = Vec::new();
            let mut sections = Vec::new();
            for t in &tags {
                b.copy(&format!("csr_hist_{t}.csv"), &format!("fig4_{t}_hist.csv"))?;
                hist.push(series(&format!("fig4_{t}_hist.csv"), t, "re_left,re_right,im_left,im_right", "density"));
                b.copy(&format!("radial_{t}.csv"), &format!("fig4_{t}_radial.csv"))?;
                radial.push(series(&format!("fig4_{t}_radial.csv"), t, "bin_left,bin_right", "density"));
                b.copy(&format!("angular_{t}.csv"), &format!("fig4_{t}_angular.csv"))?;
                angular.push(series(&format!("fig4_{t}_angular.csv"), t, "bin_left,bin_right", "density"));
                let sec = format!("section_{t}.csv");
                if b.source(&sec).is_some() {
                    b.copy(&sec, &format!("fig3b_{t}_section.csv"))?;
                    sections.push(series(&format!("fig3b_{t}_section.csv"), t, "bin_left,bin_right", "density"));
                }
            }
            b.descriptor(&PlotDescriptor {
                figure: "fig4_hist".into(),
                kind: "heatmap".into(),
                x_label: "Re z".into(),
                y_label: "Im z".into(),
                series: hist,
            })?;
            b.descriptor(&PlotDescriptor {
                figure: "fig4_radial".into(),
                kind: "histogram".into(),
                x_label: "r".into(),
                y_label: "density".into(),
                series: radial,
            })?;
            b.descriptor(&PlotDescriptor {
                figure: "fig4_angular".into(),
                kind: "histogram".into(),
                x_label: "theta".into(),
                y_label: "density".into(),
                series: angular,
            })?;
            if !sections.is_empty() {
                b.descriptor(&PlotDescriptor {
                    figure: "fig3b".into(),
                    kind: "histogram".into(),
                    x_label: "Re z".into(),
                    y_label: "density".into(),
                    series: sections,
                })?;
            }
        }
        ExperimentKind::TrajectoryTrace => {
            b.copy("distance.csv", "fig2_distance.csv")?;
            b.copy("trace.csv", "fig2_trace.csv")?;
            b.descriptor(&PlotDescriptor {
                figure: "fig2".into(),
                kind: "line".into(),
                x_label: "t".into(),
                y_label: "distance".into(),
                series: vec![
                    series("fig2_distance.csv", "distance (grouped by pair)", "t", "distance"),
                    series("fig2_trace.csv", "<O>(t)", "t", "o_t"),
                ],
            })?;
        }
        ExperimentKind::UnravelingCheck => {}
    }
    Ok(b.written)
}
