//! Fast invariant and oracle suite behind `qchaos check`.

use std::path::PathBuf;
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{config::parse_config, run_experiment, RunOptions};
use crate::csr::{self, csr_values, neighbor_triples_brute, neighbor_triples_sweep, pooled_csr, summary_stats};
use crate::linalg::{expectation, trace_distance, DensityMatrix, PureState};
use crate::liouville::{build_superoperator, evolve_density, spectrum, Spectrum};
use crate::lyapunov::{bisect_epsilon, perturb, random_direction};
use crate::models::{build_integrable_chain, build_mbl_chain, neel_state, sample_disorder, MblParams};
use crate::rng;
use crate::unravel::{ensemble_average, unravel_ensemble, JumpNoise, StepOutcome, Trajectory, Unraveler};
use crate::{Error, Result, C64};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

type CheckFn = fn() -> Result<String>;

pub const CHECKS: &[(&str, CheckFn)] = &[
    ("trace_preservation", trace_preservation),
    ("integrable_spectrum_real", integrable_spectrum_real),
    ("csr_affine_invariance", csr_affine_invariance),
    ("csr_unit_disc", csr_unit_disc),
    ("neighbor_brute_equals_sweep", neighbor_brute_equals_sweep),
    ("norm_monotonic_between_jumps", norm_monotonic_between_jumps),
    ("bisection_replay", bisection_replay),
    ("unraveling_oracle", unraveling_oracle),
    ("poisson_reference", poisson_reference),
    ("end_to_end_determinism", end_to_end_determinism),
];

/// Runs every check whose name contains `filter` (all when `None`).
pub fn run_checks(filter: Option<&str>) -> Vec<CheckOutcome> {
    CHECKS
        .iter()
        .filter(|(name, _)| filter.is_none_or(|f| name.contains(f)))
        .map(|(name, f)| {
            let start = Instant::now();
            let r = f();
            CheckOutcome {
                name: name.to_string(),
                passed: r.is_ok(),
                detail: match r {
                    Ok(s) => s,
                    Err(e) => e.to_string(),
                },
                seconds: start.elapsed().as_secs_f64(),
            }
        })
        .collect()
}

fn fail(msg: String) -> Error {
    Error::Instability(msg)
}

fn mbl(sites: usize, w: f64, seed: u64) -> Result<crate::models::LindbladModel> {
    build_mbl_chain(&MblParams::new(sites, w), &sample_disorder(sites, seed))
}

fn trace_preservation() -> Result<String> {
    let mut worst = 0.0f64;
    let mut n = 0;
    for m in 2..=4 {
        for kappa in [1.0, -1.0] {
            worst = worst.max(build_superoperator(&build_integrable_chain(m, 1.0, kappa, 1.0)?)?.trace_row_defect());
            n += 1;
        }
    }
    for m in [2, 4, 6] {
        for (w, seed) in [(1.0, 1), (20.0, 2)] {
            worst = worst.max(build_superoperator(&mbl(m, w, seed)?)?.trace_row_defect());
            n += 1;
        }
    }
    if worst > 1e-10 {
        return Err(fail(format!("trace row defect {worst:e} > 1e-10")));
    }
    Ok(format!("{n} superoperators, max defect {worst:e}"))
}

/// Largest `|Im λ|` of the integrable chain's spectrum.
pub fn integrable_max_imag(sites: usize) -> Result<f64> {
    let model = build_integrable_chain(sites, 1.0, -1.0, 1.0)?;
    Ok(spectrum(&build_superoperator(&model)?, model.label())?.max_abs_imag())
}

fn integrable_spectrum_real() -> Result<String> {
    let mut parts = Vec::new();
    for m in [4, 5] {
        let im = integrable_max_imag(m)?;
        if im > 1e-8 {
            return Err(fail(format!("M={m}: max |Im λ| = {im:e} > 1e-8")));
        }
        parts.push(format!("M={m}: {im:e}"));
    }
    Ok(parts.join(", "))
}

fn integer_points(n: usize, seed: u64) -> Vec<C64> {
    let mut s = rng::stream(seed);
    (0..n)
        .map(|_| C64::new(s.gen_range(-1000..=1000) as f64, s.gen_range(-1000..=1000) as f64))
        .collect()
}

/// Spacing ratios of integer points are unchanged, exactly, under
/// `λ ↦ aλ + b` with `a = ±2^k` or `±2^k i` and integer `b`.
fn csr_affine_invariance() -> Result<String> {
    let mut count = 0;
    for seed in 0..4 {
        let pts = integer_points(300, seed);
        let base = csr_values(&Spectrum::new(pts.clone(), "points", 0))?;
        for (a, b) in [
            (C64::new(2.0, 0.0), C64::new(3.0, -7.0)),
            (C64::new(0.0, 1.0), C64::new(0.0, 0.0)),
            (C64::new(-0.5, 0.0), C64::new(-11.0, 5.0)),
            (C64::new(0.0, -4.0), C64::new(1.0, 1.0)),
        ] {
            let moved: Vec<C64> = pts.iter().map(|&p| a * p + b).collect();
            let other = csr_values(&Spectrum::new(moved, "points", 0))?;
            for (x, y) in base.iter().zip(&other) {
                let same = x.degenerate == y.degenerate
                    && (x.degenerate || x.z == y.z);
                if !same {
                    return Err(fail(format!("a={a}, b={b}: z {} vs {}", x.z, y.z)));
                }
                count += 1;
            }
        }
    }
    Ok(format!("{count} ratios identical"))
}

fn csr_unit_disc() -> Result<String> {
    let spectra: Vec<Spectrum> = (0..5)
        .map(|i| csr::sample_ginue(200, i))
        .chain((0..5).map(|i| csr::sample_poisson_points(500, i)))
        .collect::<Result<_>>()?;
    let (samples, _) = pooled_csr(&spectra)?;
    let worst = csr::usable(&samples).iter().map(|z| z.norm()).fold(0.0, f64::max);
    if worst > 1.0 {
        return Err(fail(format!("|z| = {worst} > 1")));
    }
    Ok(format!("{} samples, max |z| = {worst}", samples.len()))
}

fn neighbor_brute_equals_sweep() -> Result<String> {
    let mut sets: Vec<Vec<C64>> = (0..3).map(|s| integer_points(400, 100 + s)).collect();
    sets.push(csr::sample_ginue(120, 9)?.eigenvalues);
    sets.push((0..225).map(|k| C64::new((k % 15) as f64, (k / 15) as f64)).collect());
    for (i, pts) in sets.iter().enumerate() {
        if neighbor_triples_brute(pts)? != neighbor_triples_sweep(pts)? {
            return Err(fail(format!("point set {i}: sweep differs from brute force")));
        }
    }
    Ok(format!("{} point sets", sets.len()))
}

fn norm_monotonic_between_jumps() -> Result<String> {
    let model = mbl(6, 2.0, 3)?;
    let eng = Unraveler::new(&model, 0.01)?;
    let mut jumps = 0;
    for seed in 0..4 {
        let mut traj = Trajectory::new(neel_state(model.basis())?, JumpNoise::new(seed));
        let mut prev = traj.state().norm_sq();
        for _ in 0..5000 {
            let out = traj.step(&eng);
            let now = traj.state().norm_sq();
            match out {
                StepOutcome::Drift => {
                    if now > prev * (1.0 + 1e-12) {
                        return Err(fail(format!("norm grew from {prev} to {now} at step {}", traj.steps())));
                    }
                }
                _ => jumps += 1,
            }
            prev = now;
        }
    }
    Ok(format!("4 trajectories x 5000 steps, {jumps} jumps"))
}

fn bisection_replay() -> Result<String> {
    let model = mbl(4, 2.0, 5)?;
    let o = model.hamiltonian();
    let mut s = rng::stream(11);
    let (delta0, tol) = (1e-6, 1e-9);
    for _ in 0..50 {
        let base = random_direction(model.dim(), &mut s)?;
        let base = PureState::new(base.amplitudes().mapv(|z| z * 0.7))?;
        let dir = random_direction(model.dim(), &mut s)?;
        let eps = match bisect_epsilon(&base, &dir, o, delta0, tol, 200) {
            Ok(e) => e,
            Err(Error::DirectionDegenerate { .. }) => continue,
            Err(e) => return Err(e),
        };
        let d = (expectation(o, &perturb(&base, &dir, eps)?)? - expectation(o, &base)?).abs();
        if (d - delta0).abs() > tol {
            return Err(fail(format!("replayed distance {d:e} misses {delta0:e} by more than {tol:e}")));
        }
    }
    Ok("50 bisections replayed within tolerance".into())
}

fn unraveling_oracle() -> Result<String> {
    let model = mbl(4, 2.0, 0)?;
    let psi0 = neel_state(model.basis())?;
    let exact = evolve_density(&model, &DensityMatrix::from_pure(&psi0)?, 5.0, 0.01)?;
    let states = unravel_ensemble(&model, &psi0, 5.0, 500, 0.01, 1)?;
    let d = trace_distance(&ensemble_average(&states)?, &exact)?;
    if d > 0.1 {
        return Err(fail(format!("trace distance {d} > 0.1 at n=500")));
    }
    Ok(format!("trace distance {d:.4} at n=500"))
}

fn poisson_reference() -> Result<String> {
    let spectra: Vec<Spectrum> = (0..20).map(|i| csr::sample_poisson_points(1000, i)).collect::<Result<_>>()?;
    let (samples, _) = pooled_csr(&spectra)?;
    let s = summary_stats(&samples)?;
    if (s.mean_r - 2.0 / 3.0).abs() > 0.02 || s.mean_cos_theta.abs() > 0.03 {
        return Err(fail(format!("<r> = {}, <cos θ> = {}", s.mean_r, s.mean_cos_theta)));
    }
    Ok(format!("<r> = {:.4}, <cos θ> = {:.4} over {} samples", s.mean_r, s.mean_cos_theta, s.n_samples))
}

fn scratch_dir(tag: &str) -> PathBuf {
    let nanos = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_nanos())
        .unwrap_or(0);
    std::env::temp_dir().join(format!("qchaos-{tag}-{}-{nanos}", std::process::id()))
}

fn end_to_end_determinism() -> Result<String> {
    let dirs = [scratch_dir("det-a"), scratch_dir("det-b")];
    let result = (|| -> Result<String> {
        for d in &dirs {
            let text = format!(
                r#"
schema_version = 1
experiment = "le_sweep"
[model]
sites = 4
w_grid = [1.0, 8.0]
[trajectory]
transient_time = 2.0
[lyapunov]
tau = 1.0
n_renorms = 5
[sampling]
n_disorder = 2
n_traj = 2
master_seed = 17
[output]
directory = "{}"
"#,
                d.display().to_string().replace('\\', "/")
            );
            run_experiment(&parse_config(&text)?, &RunOptions::default())?;
        }
        for f in ["cells.csv", "sweep.csv"] {
            let a = std::fs::read(dirs[0].join(f)).map_err(|e| Error::io(dirs[0].join(f), e))?;
            let b = std::fs::read(dirs[1].join(f)).map_err(|e| Error::io(dirs[1].join(f), e))?;
            if a != b {
                return Err(fail(format!("{f} differs between identical runs")));
            }
        }
        Ok("cells.csv and sweep.csv byte-identical across two runs".into())
    })();
    for d in &dirs {
        let _ = std::fs::remove_dir_all(d);
    }
    result
}
