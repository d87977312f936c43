//! Largest quantum Lyapunov exponent of a pair of unraveled trajectories.
//!
//! The distance between a base trajectory `ψ_b` and a perturbed one `ψ_v` is
//! `Δ(t) = |<O>_b − <O>_v|`. Both trajectories share their jump noise. Every
//! `τ` the growth factor `d_k = Δ(t_k)/Δ₀` is recorded and `ψ_v` is pulled
//! back to distance `Δ₀`; the exponent is `λ = Σ ln d_k / (K τ)`.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg::{expectation, ComplexOperator, PureState, NORM_FLOOR};
use crate::models::{
    build_integrable_chain, build_mbl_chain, neel_state, sample_disorder, sample_goe_observable,
    LindbladModel, MblParams,
};
use crate::rng::{self, Purpose, Stream};
use crate::unravel::{JumpEvent, JumpNoise, Trajectory, TrajectoryConfig, Unraveler};
use crate::{Error, Result, C64};

/// Consecutive degenerate directions tolerated before an estimate is aborted.
pub const MAX_DIRECTION_REDRAWS: usize = 10;

/// Upper end of the bisection bracket, in units of `Δ₀`.
const BRACKET_CAP: f64 = 1.2676506002282294e30; // 2^100

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RenormDirection {
    /// Current `ψ_v − ψ_b`; a random direction only when that is degenerate.
    Difference,
    /// Fresh random direction at every renormalization.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservableKind {
    ModelHamiltonian,
    GoeRandom,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovConfig {
    pub delta0: f64,
    pub tau: f64,
    pub n_renorms: usize,
    pub bisect_tol: f64,
    pub bisect_max_iter: usize,
    pub renorm_direction: RenormDirection,
}

impl LyapunovConfig {
    pub fn new(delta0: f64, tau: f64, n_renorms: usize) -> Self {
        Self {
            delta0,
            tau,
            n_renorms,
            bisect_tol: 1e-3 * delta0,
            bisect_max_iter: 200,
            renorm_direction: RenormDirection::Difference,
        }
    }

    pub fn validate(&self, dt: f64) -> Result<()> {
        if !(self.delta0 > 0.0 && self.delta0.is_finite()) {
            return Err(Error::invalid("delta0", format!("must be positive, got {}", self.delta0)));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::invalid("tau", format!("must be positive, got {}", self.tau)));
        }
        if dt > self.tau / 10.0 {
            return Err(Error::invalid(
                "dt",
                format!("dt = {dt} exceeds tau/10 = {}", self.tau / 10.0),
            ));
        }
        if self.n_renorms == 0 {
            return Err(Error::invalid("n_renorms", "must be at least 1"));
        }
        if !(self.bisect_tol > 0.0 && self.bisect_tol < self.delta0) {
            return Err(Error::invalid(
                "bisect_tol",
                format!("must lie in (0, delta0), got {}", self.bisect_tol),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthRecord {
    pub k: usize,
    pub t_k: f64,
    pub delta_tk: f64,
    pub d_k: f64,
    pub log_dk: f64,
}

/// Jumps of the base and perturbed trajectories that coincide in step and channel.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct JumpAgreement {
    pub matched: u64,
    pub total: u64,
}

impl JumpAgreement {
    fn tally(&mut self, base: &[JumpEvent], pert: &[JumpEvent]) {
        self.total += base.len().max(pert.len()) as u64;
        self.matched += base
            .iter()
            .zip(pert)
            .filter(|(a, b)| a.step == b.step && a.operator_index == b.operator_index)
            .count() as u64;
    }

    pub fn fraction(&self) -> f64 {
        if self.total == 0 {
            1.0
        } else {
            self.matched as f64 / self.total as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairSeeds {
    pub pair: u64,
    pub noise: u64,
    pub direction: u64,
}

impl PairSeeds {
    pub fn from_pair(pair: u64) -> Self {
        Self {
            pair,
            noise: rng::sub_seed(pair, Purpose::JumpNoise),
            direction: rng::sub_seed(pair, Purpose::Direction),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovEstimate {
    pub lambda: f64,
    pub records: Vec<GrowthRecord>,
    pub seeds: PairSeeds,
    pub model_label: String,
    pub tau: f64,
    pub delta0: f64,
    pub transient_time: f64,
    pub jump_agreement: JumpAgreement,
    pub direction_redraws: usize,
}

impl LyapunovEstimate {
    /// `Σ ln d_k / (K τ)` recomputed from the records.
    pub fn recomputed_lambda(&self) -> f64 {
        self.records.iter().map(|r| r.log_dk).sum::<f64>() / (self.records.len() as f64 * self.tau)
    }
}

pub fn observable_distance(o: &ComplexOperator, a: &PureState, b: &PureState) -> Result<f64> {
    Ok((expectation(o, a)? - expectation(o, b)?).abs())
}

/// `normalize(ψ_b + ε r̂) · ‖ψ_b‖`.
pub fn perturb(base: &PureState, direction: &PureState, epsilon: f64) -> Result<PureState> {
    if base.dim() != direction.dim() {
        return Err(Error::DimensionMismatch(format!(
            "base dim {} vs direction dim {}",
            base.dim(),
            direction.dim()
        )));
    }
    if base.norm_sq() < NORM_FLOOR {
        return Err(Error::DegenerateState(base.norm_sq()));
    }
    let r = 1.0 / direction.norm_sq().sqrt();
    let sum = base.amplitudes() + &direction.amplitudes().mapv(|z| z * (epsilon * r));
    let raw = PureState::new(sum)?;
    if raw.norm_sq() < NORM_FLOOR {
        return Err(Error::DegenerateState(raw.norm_sq()));
    }
    let s = (base.norm_sq() / raw.norm_sq()).sqrt();
    PureState::new(raw.into_amplitudes().mapv(|z| z * s))
}

/// Real amplitudes uniform on `[-1, 1]`, normalized.
pub fn random_direction(dim: usize, stream: &mut Stream) -> Result<PureState> {
    let amps = (0..dim)
        .map(|_| C64::new(stream.gen_range(-1.0..=1.0), 0.0))
        .collect();
    PureState::new(amps)?.normalized()
}

/// Unit vector along `ψ_v·(‖ψ_b‖/‖ψ_v‖) − ψ_b`; `None` when that vanishes.
pub fn difference_direction(base: &PureState, pert: &PureState) -> Result<Option<PureState>> {
    if pert.norm_sq() < NORM_FLOOR {
        return Ok(None);
    }
    let s = (base.norm_sq() / pert.norm_sq()).sqrt();
    let diff = pert.amplitudes().mapv(|z| z * s) - base.amplitudes();
    let d = PureState::new(diff)?;
    if d.norm_sq() <= NORM_FLOOR || d.norm_sq() <= 1e-30 * base.norm_sq() {
        return Ok(None);
    }
    Ok(Some(d.normalized()?))
}

/// Smallest-found `ε ≥ 0` with `|Δ(ε) − Δ₀| ≤ tol`, where `Δ(ε)` is the
/// observable distance between `base` and `perturb(base, direction, ε)`.
///
/// The bracket starts at `ε = Δ₀` and doubles until `Δ(ε) ≥ Δ₀`, then the
/// bracket is bisected. `max_iter` bounds doublings and bisections separately.
pub fn bisect_epsilon(
    base: &PureState,
    direction: &PureState,
    o: &ComplexOperator,
    delta0: f64,
    tol: f64,
    max_iter: usize,
) -> Result<f64> {
    if delta0 == 0.0 {
        return Ok(0.0);
    }
    if !(delta0 > 0.0 && tol > 0.0) {
        return Err(Error::invalid("delta0", format!("delta0 = {delta0}, tol = {tol}")));
    }
    let o_b = expectation(o, base)?;
    let dist = |eps: f64| -> Result<f64> { Ok((expectation(o, &perturb(base, direction, eps)?)? - o_b).abs()) };

    let mut hi = delta0;
    let mut d_hi = dist(hi)?;
    let mut doublings = 0;
    while d_hi < delta0 - tol {
        doublings += 1;
        if doublings > max_iter || hi * 2.0 > BRACKET_CAP * delta0 {
            return Err(Error::DirectionDegenerate { last_distance: d_hi });
        }
        hi *= 2.0;
        d_hi = dist(hi)?;
    }
    if (d_hi - delta0).abs() <= tol {
        return Ok(hi);
    }
    let mut lo = 0.0;
    for _ in 0..max_iter {
        let mid = 0.5 * (lo + hi);
        let d = dist(mid)?;
        if (d - delta0).abs() <= tol {
            return Ok(mid);
        }
        if d < delta0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::EstimateAborted(format!(
        "bisection did not reach tolerance {tol} within {max_iter} iterations"
    )))
}

/// Perturbed state at distance `Δ₀ ± tol` from `base`.
///
/// `preferred` is tried first; on a degenerate direction a random one is
/// drawn, up to [`MAX_DIRECTION_REDRAWS`] times. Returns the state and the
/// number of random redraws spent.
pub fn make_perturbed(
    base: &PureState,
    preferred: Option<PureState>,
    o: &ComplexOperator,
    cfg: &LyapunovConfig,
    stream: &mut Stream,
) -> Result<(PureState, usize)> {
    let mut last = f64::NAN;
    let mut redraws = 0;
    let mut candidate = preferred;
    loop {
        let dir = match candidate.take() {
            Some(d) => d,
            None => {
                if redraws >= MAX_DIRECTION_REDRAWS {
                    return Err(Error::EstimateAborted(format!(
                        "{MAX_DIRECTION_REDRAWS} consecutive degenerate directions, last distance {last:e}"
                    )));
                }
                redraws += 1;
                random_direction(base.dim(), stream)?
            }
        };
        match bisect_epsilon(base, &dir, o, cfg.delta0, cfg.bisect_tol, cfg.bisect_max_iter) {
            Ok(eps) => return Ok((perturb(base, &dir, eps)?, redraws)),
            Err(Error::DirectionDegenerate { last_distance }) => last = last_distance,
            Err(e) => return Err(e),
        }
    }
}

/// Lyapunov estimate of one trajectory pair on a prepared engine.
///
/// The base trajectory runs for `transient_time` before the perturbed copy
/// is created. From then on the perturbed trajectory is re-forked from the
/// base at every renormalization, so both carry the same threshold and
/// noise position and see the same jump draws.
pub fn estimate_le_with(
    eng: &Unraveler,
    o: &ComplexOperator,
    psi0: &PureState,
    transient_time: f64,
    lcfg: &LyapunovConfig,
    seeds: PairSeeds,
    model_label: &str,
) -> Result<LyapunovEstimate> {
    estimate(eng, o, psi0, transient_time, lcfg, seeds, model_label, None)
}

/// One sample of the base/perturbed distance, timed from the end of the transient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceRow {
    pub t: f64,
    pub distance: f64,
    pub base_jump: bool,
    pub perturbed_jump: bool,
    pub renorm: bool,
}

/// [`estimate_le_with`] that also samples `Δ(t)` every `stride` steps.
/// Rows flagged `renorm` hold `Δ(t_k)` just before the perturbed state is reset.
#[allow(clippy::too_many_arguments)]
pub fn estimate_le_traced(
    eng: &Unraveler,
    o: &ComplexOperator,
    psi0: &PureState,
    transient_time: f64,
    lcfg: &LyapunovConfig,
    seeds: PairSeeds,
    model_label: &str,
    stride: u64,
) -> Result<(LyapunovEstimate, Vec<DistanceRow>)> {
    let mut rows = Vec::new();
    let est = estimate(eng, o, psi0, transient_time, lcfg, seeds, model_label, Some((stride.max(1), &mut rows)))?;
    Ok((est, rows))
}

#[allow(clippy::too_many_arguments)]
fn estimate(
    eng: &Unraveler,
    o: &ComplexOperator,
    psi0: &PureState,
    transient_time: f64,
    lcfg: &LyapunovConfig,
    seeds: PairSeeds,
    model_label: &str,
    mut trace: Option<(u64, &mut Vec<DistanceRow>)>,
) -> Result<LyapunovEstimate> {
    lcfg.validate(eng.dt())?;
    let mut dir_stream = rng::stream(seeds.direction);
    let mut base = Trajectory::new(psi0.clone(), JumpNoise::new(seeds.noise));
    let mut scratch_log = Vec::new();
    base.run(eng, eng.steps_for(transient_time), &mut scratch_log);
    let origin = base.steps();

    let (psi_v, mut redraws) = make_perturbed(base.state(), None, o, lcfg, &mut dir_stream)?;
    let mut pert = base.fork_with_state(psi_v);
    let steps = eng.steps_for(lcfg.tau);
    let mut records = Vec::with_capacity(lcfg.n_renorms);
    let mut agreement = JumpAgreement::default();
    let (mut log_b, mut log_v) = (Vec::new(), Vec::new());
    if let Some((_, rows)) = trace.as_mut() {
        rows.push(DistanceRow {
            t: 0.0,
            distance: observable_distance(o, base.state(), pert.state())?,
            base_jump: false,
            perturbed_jump: false,
            renorm: false,
        });
    }
    for k in 1..=lcfg.n_renorms {
        log_b.clear();
        log_v.clear();
        match trace.as_mut() {
            None => {
                base.run(eng, steps, &mut log_b);
                pert.run(eng, steps, &mut log_v);
            }
            Some((stride, rows)) => {
                let mut done = 0;
                while done < steps {
                    let n = (*stride).min(steps - done);
                    let (nb, nv) = (log_b.len(), log_v.len());
                    base.run(eng, n, &mut log_b);
                    pert.run(eng, n, &mut log_v);
                    done += n;
                    rows.push(DistanceRow {
                        t: (base.steps() - origin) as f64 * eng.dt(),
                        distance: observable_distance(o, base.state(), pert.state())?,
                        base_jump: log_b.len() > nb,
                        perturbed_jump: log_v.len() > nv,
                        renorm: done == steps,
                    });
                }
            }
        }
        agreement.tally(&log_b, &log_v);
        let delta = observable_distance(o, base.state(), pert.state())?;
        let d_k = delta / lcfg.delta0;
        if !(d_k > 0.0 && d_k.is_finite()) {
            return Err(Error::EstimateAborted(format!(
                "growth factor d_{k} = {d_k} is not positive and finite"
            )));
        }
        records.push(GrowthRecord {
            k,
            t_k: k as f64 * lcfg.tau,
            delta_tk: delta,
            d_k,
            log_dk: d_k.ln(),
        });
        let preferred = match lcfg.renorm_direction {
            RenormDirection::Difference => difference_direction(base.state(), pert.state())?,
            RenormDirection::Random => Some(random_direction(base.state().dim(), &mut dir_stream)?),
        };
        let (psi_v, r) = make_perturbed(base.state(), preferred, o, lcfg, &mut dir_stream)?;
        redraws += r;
        pert = base.fork_with_state(psi_v);
    }
    let lambda = records.iter().map(|r| r.log_dk).sum::<f64>() / (lcfg.n_renorms as f64 * lcfg.tau);
    Ok(LyapunovEstimate {
        lambda,
        records,
        seeds,
        model_label: model_label.to_string(),
        tau: lcfg.tau,
        delta0: lcfg.delta0,
        transient_time,
        jump_agreement: agreement,
        direction_redraws: redraws,
    })
}

/// Lyapunov estimate seeded by `tcfg.seed`, with transient `tcfg.transient_time`.
pub fn estimate_le(
    model: &LindbladModel,
    o: &ComplexOperator,
    psi0: &PureState,
    tcfg: &TrajectoryConfig,
    lcfg: &LyapunovConfig,
) -> Result<LyapunovEstimate> {
    tcfg.validate()?;
    let eng = Unraveler::new(model, tcfg.dt)?;
    estimate_le_with(
        &eng,
        o,
        psi0,
        tcfg.transient_time,
        lcfg,
        PairSeeds::from_pair(tcfg.seed),
        model.label(),
    )
}

/// Position of one pair job inside a sweep or distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellKey {
    pub group: usize,
    pub realization: usize,
    pub pair: usize,
}

/// Outcome of one pair job; `lambda` is absent when the cell was quarantined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub key: CellKey,
    pub w: Option<f64>,
    pub realization_seed: u64,
    pub pair_seed: u64,
    pub lambda: Option<f64>,
    pub error: Option<String>,
    pub jump_agreement: JumpAgreement,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub w: f64,
    pub mean_lambda: f64,
    pub stderr: f64,
    pub n_cells: usize,
}

/// Disorder-averaged exponents of the MBL chain over a grid of `W`.
///
/// Realization `d` uses the same disorder profile and pair seeds at every
/// `W`, so rows differ only through `W`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub params: MblParams,
    pub w_grid: Vec<f64>,
    pub n_disorder: usize,
    pub n_traj: usize,
    pub observable: ObservableKind,
    pub dt: f64,
    pub transient_time: f64,
    pub lyapunov: LyapunovConfig,
    pub master_seed: u64,
}

impl SweepSpec {
    pub fn disorder_seed(&self, d: usize) -> u64 {
        rng::job_seed(self.master_seed, d as u64, 0, Purpose::Disorder)
    }

    pub fn pair_seed(&self, d: usize, p: usize) -> u64 {
        rng::job_seed(self.master_seed, d as u64, p as u64, Purpose::Pair)
    }

    pub fn observable_seed(&self, d: usize) -> u64 {
        rng::job_seed(self.master_seed, d as u64, 0, Purpose::Observable)
    }

    pub fn keys(&self) -> Vec<CellKey> {
        let mut out = Vec::with_capacity(self.w_grid.len() * self.n_disorder * self.n_traj);
        for group in 0..self.w_grid.len() {
            for realization in 0..self.n_disorder {
                for pair in 0..self.n_traj {
                    out.push(CellKey { group, realization, pair });
                }
            }
        }
        out
    }

    fn validate(&self) -> Result<()> {
        if self.w_grid.is_empty() || self.n_disorder == 0 || self.n_traj == 0 {
            return Err(Error::invalid("w_grid", "sweep grids must be non-empty"));
        }
        self.lyapunov.validate(self.dt)
    }

    fn run_group(&self, group: usize, realization: usize, pairs: &[usize], sink: &(dyn Fn(&CellRecord) + Sync)) -> Vec<CellRecord> {
        let w = self.w_grid[group];
        let disorder_seed = self.disorder_seed(realization);
        let setup = || -> Result<(Unraveler, ComplexOperator, PureState, String)> {
            let params = MblParams {
                disorder_strength: w,
                ..self.params
            };
            let model = build_mbl_chain(&params, &sample_disorder(params.sites, disorder_seed))?;
            let o = match self.observable {
                ObservableKind::ModelHamiltonian => model.hamiltonian().clone(),
                ObservableKind::GoeRandom => sample_goe_observable(model.dim(), self.observable_seed(realization)),
            };
            let psi0 = neel_state(model.basis())?;
            Ok((Unraveler::new(&model, self.dt)?, o, psi0, model.label().to_string()))
        };
        let prepared = setup();
        pairs
            .iter()
            .map(|&pair| {
                let key = CellKey { group, realization, pair };
                let pair_seed = self.pair_seed(realization, pair);
                let est = prepared.as_ref().map_err(|e| e.to_string()).and_then(|(eng, o, psi0, label)| {
                    estimate_le_with(
                        eng,
                        o,
                        psi0,
                        self.transient_time,
                        &self.lyapunov,
                        PairSeeds::from_pair(pair_seed),
                        label,
                    )
                    .map_err(|e| e.to_string())
                });
                let rec = cell_record(key, Some(w), disorder_seed, pair_seed, est);
                sink(&rec);
                rec
            })
            .collect()
    }
}

fn cell_record(
    key: CellKey,
    w: Option<f64>,
    realization_seed: u64,
    pair_seed: u64,
    est: std::result::Result<LyapunovEstimate, String>,
) -> CellRecord {
    match est {
        Ok(e) => CellRecord {
            key,
            w,
            realization_seed,
            pair_seed,
            lambda: Some(e.lambda),
            error: None,
            jump_agreement: e.jump_agreement,
        },
        Err(msg) => CellRecord {
            key,
            w,
            realization_seed,
            pair_seed,
            lambda: None,
            error: Some(msg),
            jump_agreement: JumpAgreement::default(),
        },
    }
}

/// Groups pending keys by `(group, realization)` so each model is built once.
fn pending_groups(keys: &[CellKey], done: &(dyn Fn(&CellKey) -> bool + Sync)) -> Vec<((usize, usize), Vec<usize>)> {
    let mut groups: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for k in keys.iter().filter(|k| !done(k)) {
        groups.entry((k.group, k.realization)).or_default().push(k.pair);
    }
    groups.into_iter().collect()
}

/// Runs every cell not reported `done`, calling `sink` as each finishes.
/// Failed cells are returned with their error instead of aborting the sweep.
pub fn run_sweep_cells(
    spec: &SweepSpec,
    done: &(dyn Fn(&CellKey) -> bool + Sync),
    sink: &(dyn Fn(&CellRecord) + Sync),
) -> Result<Vec<CellRecord>> {
    spec.validate()?;
    let groups = pending_groups(&spec.keys(), done);
    let mut out: Vec<CellRecord> = groups
        .par_iter()
        .flat_map_iter(|((g, d), pairs)| spec.run_group(*g, *d, pairs, sink))
        .collect();
    out.sort_by_key(|r| r.key);
    Ok(out)
}

/// Per-`W` mean over successful cells. The standard error is taken over
/// realization means when there are at least two realizations, otherwise
/// over cells.
pub fn aggregate_sweep(w_grid: &[f64], cells: &[CellRecord]) -> Vec<SweepRow> {
    w_grid
        .iter()
        .enumerate()
        .map(|(g, &w)| {
            let mut by_real: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
            for c in cells.iter().filter(|c| c.key.group == g) {
                if let Some(l) = c.lambda {
                    by_real.entry(c.key.realization).or_default().push(l);
                }
            }
            let all: Vec<f64> = by_real.values().flatten().copied().collect();
            let n_cells = all.len();
            let mean_lambda = mean(&all);
            let stderr = if by_real.len() >= 2 {
                let means: Vec<f64> = by_real.values().map(|v| mean(v)).collect();
                std_dev(&means) / (means.len() as f64).sqrt()
            } else if n_cells >= 2 {
                std_dev(&all) / (n_cells as f64).sqrt()
            } else {
                f64::NAN
            };
            SweepRow {
                w,
                mean_lambda,
                stderr,
                n_cells,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub cells: Vec<CellRecord>,
}

impl SweepResult {
    pub fn failures(&self) -> impl Iterator<Item = &CellRecord> {
        self.cells.iter().filter(|c| c.lambda.is_none())
    }
}

pub fn le_sweep(spec: &SweepSpec) -> Result<SweepResult> {
    let cells = run_sweep_cells(spec, &|_| false, &|_| {})?;
    Ok(SweepResult {
        rows: aggregate_sweep(&spec.w_grid, &cells),
        cells,
    })
}

/// Exponents of the integrable chain over random GOE observables and
/// trajectory pairs started from the alternating state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionSpec {
    pub sites: usize,
    pub eta_b1: f64,
    pub kappa: f64,
    pub gamma: f64,
    pub n_observables: usize,
    pub n_pairs: usize,
    pub dt: f64,
    pub transient_time: f64,
    pub lyapunov: LyapunovConfig,
    pub master_seed: u64,
}

impl DistributionSpec {
    pub fn observable_seed(&self, i: usize) -> u64 {
        rng::job_seed(self.master_seed, i as u64, 0, Purpose::Observable)
    }

    pub fn pair_seed(&self, i: usize, p: usize) -> u64 {
        rng::job_seed(self.master_seed, i as u64, p as u64, Purpose::Pair)
    }

    pub fn keys(&self) -> Vec<CellKey> {
        (0..self.n_observables)
            .flat_map(|realization| (0..self.n_pairs).map(move |pair| CellKey { group: 0, realization, pair }))
            .collect()
    }
}

pub fn run_distribution_cells(
    spec: &DistributionSpec,
    done: &(dyn Fn(&CellKey) -> bool + Sync),
    sink: &(dyn Fn(&CellRecord) + Sync),
) -> Result<Vec<CellRecord>> {
    if spec.n_observables == 0 || spec.n_pairs == 0 {
        return Err(Error::invalid("n_observables", "distribution grids must be non-empty"));
    }
    spec.lyapunov.validate(spec.dt)?;
    let model = build_integrable_chain(spec.sites, spec.eta_b1, spec.kappa, spec.gamma)?;
    let eng = Unraveler::new(&model, spec.dt)?;
    let psi0 = neel_state(model.basis())?;
    let groups = pending_groups(&spec.keys(), done);
    let mut out: Vec<CellRecord> = groups
        .par_iter()
        .flat_map_iter(|((_, i), pairs)| {
            let obs_seed = spec.observable_seed(*i);
            let o = sample_goe_observable(model.dim(), obs_seed);
            let (eng, psi0, model) = (&eng, &psi0, &model);
            pairs
                .iter()
                .map(|&p| {
                    let key = CellKey { group: 0, realization: *i, pair: p };
                    let pair_seed = spec.pair_seed(*i, p);
                    let est = estimate_le_with(
                        eng,
                        &o,
                        psi0,
                        spec.transient_time,
                        &spec.lyapunov,
                        PairSeeds::from_pair(pair_seed),
                        model.label(),
                    )
                    .map_err(|e| e.to_string());
                    let rec = cell_record(key, None, obs_seed, pair_seed, est);
                    sink(&rec);
                    rec
                })
                .collect::<Vec<_>>()
        })
        .collect();
    out.sort_by_key(|r| r.key);
    Ok(out)
}

pub fn le_distribution(spec: &DistributionSpec) -> Result<Vec<CellRecord>> {
    run_distribution_cells(spec, &|_| false, &|_| {})
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (`n − 1` denominator).
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Sample skewness `g₁ = m₃ / m₂^{3/2}` with population moments.
pub fn skewness(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = mean(xs);
    let m2 = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    let m3 = xs.iter().map(|x| (x - m).powi(3)).sum::<f64>() / n;
    m3 / m2.powf(1.5)
}
