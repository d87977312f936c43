//! Monte-Carlo wave-function unraveling.
//!
//! Between jumps a state drifts under `d|ψ>/dt = −i H_eff |ψ>` with
//! `H_eff = H − (i/2) Σ_k γ_k L_k† L_k`, so its squared norm decays. A jump
//! fires on the first step where the squared norm is at or below a threshold
//! `η ~ U(0, 1)`; channel `k` is chosen with probability proportional to
//! `γ_k ‖L_k ψ‖²`, the state is replaced by `L_k ψ / ‖L_k ψ‖`, and a fresh
//! threshold is drawn.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg::{
    expectation, hermitian_eigenvalues, matexp, ComplexOperator, DensityMatrix, PureState,
    SplitMatrix, SplitScratch,
};
use crate::models::LindbladModel;
use crate::rng::{self, Purpose, Stream};
use crate::{Error, Result, C64};

/// Default integrator step.
pub const DEFAULT_DT: f64 = 1e-2;

/// Steps fused into one propagator application while no jump is due.
pub const DEFAULT_BLOCK: u64 = 16;

#[derive(Debug, Clone)]
pub struct EffectiveHamiltonian {
    matrix: ComplexOperator,
}

impl EffectiveHamiltonian {
    pub fn matrix(&self) -> &ComplexOperator {
        &self.matrix
    }

    /// Largest eigenvalue of `(H_eff − H_eff†) / 2i`; never positive.
    pub fn max_decay_eigenvalue(&self) -> f64 {
        let m = self.matrix.entries();
        let a = (m - &m.t().mapv(|z| z.conj())).mapv(|z| z / C64::new(0.0, 2.0));
        hermitian_eigenvalues(&a)
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

pub fn effective_hamiltonian(model: &LindbladModel) -> EffectiveHamiltonian {
    let mut decay = ComplexOperator::zeros(model.dim());
    for j in model.jumps() {
        let ltl = j.operator.adjoint().matmul(&j.operator);
        decay = decay.add(&ltl.scale(C64::new(j.rate, 0.0)));
    }
    EffectiveHamiltonian {
        matrix: model.hamiltonian().sub(&decay.scale(C64::new(0.0, 0.5))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryConfig {
    pub dt: f64,
    pub transient_time: f64,
    pub run_time: f64,
    pub seed: u64,
}

impl TrajectoryConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid("dt", format!("must be positive, got {}", self.dt)));
        }
        if !(self.transient_time >= 0.0 && self.run_time >= 0.0) {
            return Err(Error::invalid("run_time", "times must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpEvent {
    pub step: u64,
    pub time: f64,
    pub operator_index: usize,
    pub pre_norm_sq: f64,
    pub threshold: f64,
}

/// Jump thresholds and channel-selection draws, consumed in jump order.
///
/// Cloning the noise of one trajectory into another makes both see the same
/// sequence, which is how base and perturbed Lyapunov trajectories share
/// their jump randomness.
#[derive(Debug, Clone)]
pub struct JumpNoise {
    stream: Stream,
}

impl JumpNoise {
    pub fn new(seed: u64) -> Self {
        Self {
            stream: rng::stream(seed),
        }
    }

    /// Uniform on `(0, 1)`.
    pub fn threshold(&mut self) -> f64 {
        loop {
            let u: f64 = self.stream.gen();
            if u > 0.0 {
                return u;
            }
        }
    }

    /// Uniform on `[0, 1)`.
    pub fn selection(&mut self) -> f64 {
        self.stream.gen()
    }
}

/// Index `k` with `Σ_{j<k} w_j ≤ u·Σw < Σ_{j≤k} w_j`; `None` when all weights vanish.
pub fn select_channel(weights: &[f64], u: f64) -> Option<usize> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return None;
    }
    let target = u * total;
    let mut acc = 0.0;
    let mut last_positive = None;
    for (k, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            last_positive = Some(k);
        }
        acc += w;
        if target < acc && w > 0.0 {
            return Some(k);
        }
    }
    last_positive
}

/// Samples a jump channel from `u` and returns the renormalized post-jump state.
pub fn perform_jump(psi: &PureState, model: &LindbladModel, rng: &mut Stream) -> Result<(PureState, usize)> {
    let outs: Vec<_> = model
        .jumps()
        .iter()
        .map(|j| j.operator.apply(psi.amplitudes()))
        .collect();
    let weights: Vec<f64> = outs
        .iter()
        .zip(model.jumps())
        .map(|(v, j)| j.rate * v.iter().map(|z| z.norm_sqr()).sum::<f64>())
        .collect();
    let u: f64 = rng.gen();
    let k = select_channel(&weights, u).ok_or(Error::DarkState)?;
    let state = PureState::new(outs[k].clone())?.normalized()?;
    Ok((state, k))
}

/// Precomputed step propagator and jump channels of one model.
///
/// Because the squared norm only decreases between jumps, a block of `B`
/// steps whose end norm is still above the threshold contains no jump and
/// can be applied as the single propagator `exp(−i H_eff B dt)`.
#[derive(Debug, Clone)]
pub struct Unraveler {
    dt: f64,
    step: SplitMatrix,
    block: Option<(SplitMatrix, u64)>,
    jumps: Vec<(SplitMatrix, f64)>,
}

impl Unraveler {
    pub fn new(model: &LindbladModel, dt: f64) -> Result<Self> {
        Self::with_hamiltonian(model, &effective_hamiltonian(model), dt)
    }

    pub fn with_hamiltonian(model: &LindbladModel, heff: &EffectiveHamiltonian, dt: f64) -> Result<Self> {
        Self::with_block(model, heff, dt, DEFAULT_BLOCK)
    }

    /// `block <= 1` disables fused stepping.
    pub fn with_block(model: &LindbladModel, heff: &EffectiveHamiltonian, dt: f64, block: u64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid("dt", format!("must be positive, got {dt}")));
        }
        if heff.matrix.dim() != model.dim() {
            return Err(Error::DimensionMismatch(format!(
                "effective hamiltonian dim {} vs model dim {}",
                heff.matrix.dim(),
                model.dim()
            )));
        }
        let generator = heff.matrix.scale(C64::new(0.0, -1.0));
        let step = SplitMatrix::new(&matexp(&generator, dt)?);
        let block = if block > 1 {
            Some((SplitMatrix::new(&matexp(&generator, dt * block as f64)?), block))
        } else {
            None
        };
        let jumps = model
            .jumps()
            .iter()
            .map(|j| (SplitMatrix::new(&j.operator), j.rate))
            .collect();
        Ok(Self {
            dt,
            step,
            block,
            jumps,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn dim(&self) -> usize {
        self.step.dim()
    }

    /// Number of steps covering `duration` at this step size.
    pub fn steps_for(&self, duration: f64) -> u64 {
        (duration / self.dt).round() as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepOutcome {
    Drift,
    Jump(JumpEvent),
    /// Threshold reached with every channel weight zero; the state was
    /// renormalized and a new threshold drawn.
    DarkState { step: u64 },
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    psi: PureState,
    threshold: f64,
    noise: JumpNoise,
    steps: u64,
    buf: Vec<C64>,
    jump_buf: Vec<C64>,
    scratch: SplitScratch,
}

impl Trajectory {
    /// Starts from `psi0` and draws the first threshold from `noise`.
    pub fn new(psi0: PureState, mut noise: JumpNoise) -> Self {
        let threshold = noise.threshold();
        let n = psi0.dim();
        Self {
            psi: psi0,
            threshold,
            noise,
            steps: 0,
            buf: vec![C64::new(0.0, 0.0); n],
            jump_buf: vec![C64::new(0.0, 0.0); n],
            scratch: SplitScratch::default(),
        }
    }

    pub fn state(&self) -> &PureState {
        &self.psi
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn time(&self, dt: f64) -> f64 {
        self.steps as f64 * dt
    }

    /// Copy of this trajectory (clock, threshold, noise position) carrying a
    /// different state.
    pub fn fork_with_state(&self, psi: PureState) -> Self {
        let mut t = self.clone();
        t.psi = psi;
        t
    }

    pub fn step(&mut self, eng: &Unraveler) -> StepOutcome {
        let before = self.psi.norm_sq();
        eng.step.apply(self.psi.as_slice(), &mut self.buf, &mut self.scratch);
        let buf = &self.buf;
        self.psi.set_amplitudes(|a| a.copy_from_slice(buf));
        self.steps += 1;
        debug_assert!(
            self.psi.norm_sq() <= before * (1.0 + 1e-12),
            "norm grew between jumps: {before} -> {}",
            self.psi.norm_sq()
        );
        if self.psi.norm_sq() > self.threshold {
            return StepOutcome::Drift;
        }
        self.jump(eng)
    }

    fn jump(&mut self, eng: &Unraveler) -> StepOutcome {
        let pre_norm_sq = self.psi.norm_sq();
        let threshold = self.threshold;
        let mut weights = Vec::with_capacity(eng.jumps.len());
        for (op, rate) in &eng.jumps {
            op.apply(self.psi.as_slice(), &mut self.jump_buf, &mut self.scratch);
            weights.push(rate * self.jump_buf.iter().map(|z| z.norm_sqr()).sum::<f64>());
        }
        let u = self.noise.selection();
        let outcome = match select_channel(&weights, u) {
            Some(k) => {
                eng.jumps[k]
                    .0
                    .apply(self.psi.as_slice(), &mut self.jump_buf, &mut self.scratch);
                let s = 1.0 / (weights[k] / eng.jumps[k].1).sqrt();
                let jb = &self.jump_buf;
                self.psi
                    .set_amplitudes(|a| a.iter_mut().zip(jb).for_each(|(x, y)| *x = y * s));
                StepOutcome::Jump(JumpEvent {
                    step: self.steps,
                    time: self.steps as f64 * eng.dt,
                    operator_index: k,
                    pre_norm_sq,
                    threshold,
                })
            }
            None => {
                let s = 1.0 / pre_norm_sq.sqrt();
                self.psi.set_amplitudes(|a| a.iter_mut().for_each(|x| *x *= s));
                StepOutcome::DarkState { step: self.steps }
            }
        };
        self.threshold = self.noise.threshold();
        outcome
    }

    /// Runs `n` steps, appending jumps to `log`; returns the dark-state count.
    pub fn run(&mut self, eng: &Unraveler, n: u64, log: &mut Vec<JumpEvent>) -> usize {
        let mut dark = 0;
        let mut record = |o: StepOutcome| match o {
            StepOutcome::Drift => false,
            StepOutcome::Jump(ev) => {
                log.push(ev);
                true
            }
            StepOutcome::DarkState { .. } => {
                dark += 1;
                true
            }
        };
        let mut left = n;
        while left > 0 {
            if let Some((bm, b)) = &eng.block {
                if left >= *b {
                    bm.apply(self.psi.as_slice(), &mut self.buf, &mut self.scratch);
                    let end = self.buf.iter().map(|z| z.norm_sqr()).sum::<f64>();
                    if end > self.threshold {
                        let buf = &self.buf;
                        self.psi.set_amplitudes(|a| a.copy_from_slice(buf));
                        self.steps += b;
                        left -= b;
                        continue;
                    }
                    for _ in 0..*b {
                        left -= 1;
                        if record(self.step(eng)) {
                            break;
                        }
                    }
                    continue;
                }
            }
            left -= 1;
            record(self.step(eng));
        }
        dark
    }
}

#[derive(Debug, Clone)]
pub struct TrajectoryRun {
    pub final_state: PureState,
    pub jumps: Vec<JumpEvent>,
    pub dark_events: usize,
}

/// Evolves `psi0` for `transient_time + run_time`.
pub fn evolve_trajectory(
    psi0: &PureState,
    heff: &EffectiveHamiltonian,
    model: &LindbladModel,
    cfg: &TrajectoryConfig,
    noise: JumpNoise,
) -> Result<TrajectoryRun> {
    cfg.validate()?;
    if (psi0.norm_sq() - 1.0).abs() > 1e-10 {
        return Err(Error::invalid(
            "psi0",
            format!("initial state must have unit norm, got {}", psi0.norm_sq()),
        ));
    }
    let eng = Unraveler::with_hamiltonian(model, heff, cfg.dt)?;
    let mut traj = Trajectory::new(psi0.clone(), noise);
    let mut jumps = Vec::new();
    let n = eng.steps_for(cfg.transient_time + cfg.run_time);
    let dark_events = traj.run(&eng, n, &mut jumps);
    Ok(TrajectoryRun {
        final_state: traj.psi,
        jumps,
        dark_events,
    })
}

/// `(1/n) Σ |ψ_i><ψ_i|` over normalized snapshots.
pub fn ensemble_average(states: &[PureState]) -> Result<DensityMatrix> {
    let first = states.first().ok_or(Error::Empty("trajectory ensemble"))?;
    let n = first.dim();
    let mut acc = ndarray::Array2::<C64>::zeros((n, n));
    for psi in states {
        if psi.dim() != n {
            return Err(Error::DimensionMismatch(format!(
                "snapshot dim {} vs {n}",
                psi.dim()
            )));
        }
        acc = acc + psi.projector()?;
    }
    let inv = 1.0 / states.len() as f64;
    DensityMatrix::new_unchecked(acc.mapv(|z| z * inv))
}

/// Snapshots at time `t` of `n` independent trajectories from `psi0`.
/// Trajectory `i` draws its noise from `job_seed(master_seed, 0, i, JumpNoise)`.
pub fn unravel_ensemble(
    model: &LindbladModel,
    psi0: &PureState,
    t: f64,
    n: usize,
    dt: f64,
    master_seed: u64,
) -> Result<Vec<PureState>> {
    let eng = Unraveler::new(model, dt)?;
    let steps = eng.steps_for(t);
    (0..n)
        .into_par_iter()
        .map(|i| {
            let seed = rng::job_seed(master_seed, 0, i as u64, Purpose::JumpNoise);
            let mut traj = Trajectory::new(psi0.clone(), JumpNoise::new(seed));
            let mut log = Vec::new();
            traj.run(&eng, steps, &mut log);
            traj.psi.normalized()
        })
        .collect()
}

/// One row of a trajectory trace dump.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: f64,
    pub norm_sq: f64,
    pub o_t: f64,
    pub jump_flag: bool,
}

/// Records `(t, ‖ψ‖², <O>, jumped)` every `stride` steps; `jump_flag` marks
/// strides that contained at least one jump.
pub fn trace_trajectory(
    eng: &Unraveler,
    psi0: &PureState,
    observable: &ComplexOperator,
    duration: f64,
    stride: u64,
    noise: JumpNoise,
) -> Result<Vec<TraceRow>> {
    let stride = stride.max(1);
    let mut traj = Trajectory::new(psi0.clone(), noise);
    let mut rows = vec![TraceRow {
        t: 0.0,
        norm_sq: traj.psi.norm_sq(),
        o_t: expectation(observable, &traj.psi)?,
        jump_flag: false,
    }];
    let mut jumped = false;
    for _ in 0..eng.steps_for(duration) {
        if let StepOutcome::Jump(_) = traj.step(eng) {
            jumped = true;
        }
        if traj.steps.is_multiple_of(stride) {
            rows.push(TraceRow {
                t: traj.time(eng.dt),
                norm_sq: traj.psi.norm_sq(),
                o_t: expectation(observable, &traj.psi)?,
                jump_flag: jumped,
            });
            jumped = false;
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::trace_distance;
    use crate::models::{build_integrable_chain, build_mbl_chain, neel_state, sample_disorder, MblParams};

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    #[test]
    fn integrable_heff_is_scalar() {
        for m in [3, 5] {
            let model = build_integrable_chain(m, 1.0, -1.0, 0.8).unwrap();
            let heff = effective_hamiltonian(&model);
            let expect = ComplexOperator::identity(1 << m).scale(C64::new(0.0, -0.5 * 0.8 * (m - 1) as f64));
            assert!(heff.matrix().max_abs_diff(&expect) <= 1e-12);
        }
        // M=3, γ=1: −(i/2)·γ·2·I₈.
        let heff = effective_hamiltonian(&build_integrable_chain(3, 1.0, -1.0, 1.0).unwrap());
        assert!(heff.matrix().max_abs_diff(&ComplexOperator::identity(8).scale(C64::new(0.0, -1.0))) <= 1e-12);
    }

    #[test]
    fn heff_reconstruction_and_decay_sign() {
        let model = build_mbl_chain(&MblParams::new(6, 2.0), &sample_disorder(6, 1)).unwrap();
        let heff = effective_hamiltonian(&model);
        let mut rebuilt = model.hamiltonian().clone();
        for j in model.jumps() {
            let ltl = j.operator.adjoint().matmul(&j.operator);
            rebuilt = rebuilt.sub(&ltl.scale(C64::new(0.0, 0.5 * j.rate)));
        }
        assert!(heff.matrix().max_abs_diff(&rebuilt) <= 1e-12);
        assert!(heff.max_decay_eigenvalue() <= 1e-10);
        assert_eq!(effective_hamiltonian(&model.without_jumps()).matrix().max_abs_diff(model.hamiltonian()), 0.0);
    }

    #[test]
    fn amplitude_damping_heff_and_decay() {
        let model = LindbladModel::amplitude_damping(1.0).unwrap();
        let heff = effective_hamiltonian(&model);
        let expect = ComplexOperator::from_diag(&[c(0.0), C64::new(0.0, -0.5)]);
        assert!(heff.matrix().max_abs_diff(&expect) <= 1e-15);
        // Threshold forced below any reachable norm: pure drift.
        let eng = Unraveler::new(&model, 0.01).unwrap();
        let mut traj = Trajectory::new(PureState::basis(2, 1).unwrap(), JumpNoise::new(1));
        traj.threshold = 1e-12;
        for _ in 0..100 {
            assert_eq!(traj.step(&eng), StepOutcome::Drift);
        }
        // ‖ψ‖ = e^{-t/2}, so ‖ψ‖² = e^{-t} at t = 1.
        assert!((traj.state().norm_sq() - (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn select_channel_boundaries() {
        assert_eq!(select_channel(&[1.0], 0.999), Some(0));
        assert_eq!(select_channel(&[0.0, 1.0, 1.0], 0.0), Some(1));
        assert_eq!(select_channel(&[1.0, 1.0], 0.5), Some(1));
        assert_eq!(select_channel(&[1.0, 0.0], 0.9999999), Some(0));
        assert_eq!(select_channel(&[0.0, 0.0], 0.3), None);
    }

    #[test]
    fn perform_jump_examples() {
        let model = LindbladModel::amplitude_damping(0.5).unwrap();
        let mut s = rng::stream(3);
        let (post, k) = perform_jump(&PureState::basis(2, 1).unwrap(), &model, &mut s).unwrap();
        assert_eq!(k, 0);
        assert_eq!(post, PureState::basis(2, 0).unwrap());
        assert!(matches!(
            perform_jump(&PureState::basis(2, 0).unwrap(), &model, &mut s),
            Err(Error::DarkState)
        ));
    }

    #[test]
    fn equal_weight_channels_split_evenly() {
        // Two swap channels on M=3: both unitary, so weights are equal.
        let model = build_integrable_chain(3, 1.0, -1.0, 1.0).unwrap();
        let psi = neel_state(model.basis()).unwrap();
        let mut s = rng::stream(8);
        let n = 10_000;
        let zeros = (0..n)
            .filter(|_| perform_jump(&psi, &model, &mut s).unwrap().1 == 0)
            .count();
        let f = zeros as f64 / n as f64;
        assert!((f - 0.5).abs() <= 0.02, "{f}");
    }

    #[test]
    fn integrable_norm_decay_is_state_independent() {
        let m = 4;
        let gamma = 0.7;
        let model = build_integrable_chain(m, 1.0, -1.0, gamma).unwrap();
        let eng = Unraveler::new(&model, 0.01).unwrap();
        let mut traj = Trajectory::new(neel_state(model.basis()).unwrap(), JumpNoise::new(5));
        let mut last_reset = (0u64, 1.0f64);
        for _ in 0..2000 {
            match traj.step(&eng) {
                StepOutcome::Drift => {
                    let elapsed = (traj.steps() - last_reset.0) as f64 * 0.01;
                    let expect = last_reset.1 * (-gamma * (m - 1) as f64 * elapsed).exp();
                    assert!((traj.state().norm_sq() - expect).abs() <= 1e-12 * expect.max(1e-300) + 1e-15);
                }
                StepOutcome::Jump(_) => last_reset = (traj.steps(), traj.state().norm_sq()),
                StepOutcome::DarkState { .. } => panic!("unitary channels are never dark"),
            }
        }
    }

    #[test]
    fn no_jumps_conserves_norm() {
        let model = build_mbl_chain(&MblParams::new(4, 1.0), &sample_disorder(4, 2)).unwrap().without_jumps();
        let cfg = TrajectoryConfig { dt: 0.01, transient_time: 0.0, run_time: 10.0, seed: 0 };
        let psi0 = neel_state(model.basis()).unwrap();
        let run = evolve_trajectory(&psi0, &effective_hamiltonian(&model), &model, &cfg, JumpNoise::new(1)).unwrap();
        assert!(run.jumps.is_empty());
        assert!((run.final_state.norm_sq() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn jumps_fire_at_threshold_and_norm_is_monotone() {
        let model = build_mbl_chain(&MblParams::new(4, 1.0), &sample_disorder(4, 6)).unwrap();
        let eng = Unraveler::new(&model, 0.01).unwrap();
        let mut traj = Trajectory::new(neel_state(model.basis()).unwrap(), JumpNoise::new(11));
        let mut jumps = 0;
        for _ in 0..50_000 {
            let before = traj.state().norm_sq();
            let threshold = traj.threshold();
            match traj.step(&eng) {
                StepOutcome::Drift => assert!(traj.state().norm_sq() <= before * (1.0 + 1e-12)),
                StepOutcome::Jump(ev) => {
                    jumps += 1;
                    assert_eq!(ev.threshold, threshold);
                    assert!(ev.pre_norm_sq <= ev.threshold + 1e-9);
                    assert!(ev.pre_norm_sq <= before);
                    // Fired on the first step below threshold.
                    assert!(before > threshold);
                    assert!((traj.state().norm_sq() - 1.0).abs() < 1e-12);
                }
                StepOutcome::DarkState { .. } => {}
            }
        }
        assert!(jumps > 10);
    }

    #[test]
    fn trajectories_are_deterministic() {
        let model = build_mbl_chain(&MblParams::new(4, 1.0), &sample_disorder(4, 6)).unwrap();
        let heff = effective_hamiltonian(&model);
        let cfg = TrajectoryConfig { dt: 0.01, transient_time: 5.0, run_time: 20.0, seed: 0 };
        let psi0 = neel_state(model.basis()).unwrap();
        let a = evolve_trajectory(&psi0, &heff, &model, &cfg, JumpNoise::new(77)).unwrap();
        let b = evolve_trajectory(&psi0, &heff, &model, &cfg, JumpNoise::new(77)).unwrap();
        assert_eq!(a.jumps, b.jumps);
        assert_eq!(a.final_state, b.final_state);
        assert!(evolve_trajectory(&PureState::new(psi0.amplitudes().mapv(|z| z * 2.0)).unwrap(), &heff, &model, &cfg, JumpNoise::new(1)).is_err());
    }

    #[test]
    fn ensemble_average_examples() {
        let one = ensemble_average(&[PureState::basis(3, 1).unwrap()]).unwrap();
        assert_eq!(one.matrix()[[1, 1]], c(1.0));
        let two = ensemble_average(&[PureState::basis(2, 0).unwrap(), PureState::basis(2, 1).unwrap()]).unwrap();
        assert_eq!(two, DensityMatrix::maximally_mixed(2));
        assert!(matches!(ensemble_average(&[]), Err(Error::Empty(_))));
    }

    #[test]
    fn fused_blocks_match_single_steps() {
        let model = build_mbl_chain(&MblParams::new(6, 1.0), &sample_disorder(6, 3)).unwrap();
        let heff = effective_hamiltonian(&model);
        let fused = Unraveler::with_block(&model, &heff, 0.01, 16).unwrap();
        let single = Unraveler::with_block(&model, &heff, 0.01, 1).unwrap();
        let psi0 = neel_state(model.basis()).unwrap();
        let mut a = Trajectory::new(psi0.clone(), JumpNoise::new(21));
        let mut b = Trajectory::new(psi0, JumpNoise::new(21));
        let (mut la, mut lb) = (Vec::new(), Vec::new());
        a.run(&fused, 20_000, &mut la);
        b.run(&single, 20_000, &mut lb);
        assert!(la.len() > 5);
        let key = |e: &JumpEvent| (e.step, e.operator_index);
        assert_eq!(la.iter().map(key).collect::<Vec<_>>(), lb.iter().map(key).collect::<Vec<_>>());
        assert_eq!(a.steps(), b.steps());
        let diff = a.state().amplitudes() - b.state().amplitudes();
        assert!(diff.iter().map(|z| z.norm()).fold(0.0, f64::max) < 1e-9);
    }

    #[test]
    fn small_ensemble_tracks_master_equation() {
        let model = build_mbl_chain(&MblParams::new(4, 2.0), &sample_disorder(4, 4)).unwrap();
        let psi0 = neel_state(model.basis()).unwrap();
        let states = unravel_ensemble(&model, &psi0, 5.0, 400, 0.01, 9).unwrap();
        let avg = ensemble_average(&states).unwrap();
        assert!((avg.trace() - c(1.0)).norm() <= 1e-12);
        let exact = crate::liouville::evolve_density(&model, &DensityMatrix::from_pure(&psi0).unwrap(), 5.0, 0.01).unwrap();
        assert!(trace_distance(&avg, &exact).unwrap() <= 0.12);
    }

    #[test]
    fn trace_rows_follow_stride() {
        let model = build_integrable_chain(3, 1.0, -1.0, 1.0).unwrap();
        let eng = Unraveler::new(&model, 0.01).unwrap();
        let o = crate::models::sample_goe_observable(8, 2);
        let rows = trace_trajectory(&eng, &neel_state(model.basis()).unwrap(), &o, 2.0, 10, JumpNoise::new(1)).unwrap();
        assert_eq!(rows.len(), 21);
        assert!((rows[20].t - 2.0).abs() < 1e-12);
        assert!(rows.iter().any(|r| r.jump_flag));
    }
}
