//! Independent oracles for derived quantities.

use qchaos::linalg::{hermitian_eigenvalues, trace_distance, DensityMatrix, PureState};
use qchaos::liouville::evolve_density;
use qchaos::models::{build_mbl_chain, neel_state, sample_disorder, sample_goe_observable, LindbladModel, MblParams};
use qchaos::rng::{job_seed, Purpose};
use qchaos::unravel::{ensemble_average, unravel_ensemble, JumpNoise, StepOutcome, Trajectory, Unraveler};

/// `(G + Gᵀ)/2` with unit-variance `G` has off-diagonal variance 1/2, so the
/// spectrum of `A/√N` approaches a semicircle of radius √2.
#[test]
fn goe_observable_semicircle() {
    let n = 400;
    let a = sample_goe_observable(n, 5);
    let ev: Vec<f64> = hermitian_eigenvalues(a.entries()).iter().map(|x| x / (n as f64).sqrt()).collect();
    let second = ev.iter().map(|x| x * x).sum::<f64>() / n as f64;
    assert!((second - 0.5).abs() < 0.03, "second moment {second}");
    let edge = ev.iter().copied().fold(0.0f64, |m, x| m.max(x.abs()));
    assert!((edge - 2f64.sqrt()).abs() < 0.08, "spectral edge {edge}");
    let inner = ev.iter().filter(|x| x.abs() < 1.0).count() as f64 / n as f64;
    // Semicircle mass of |x| < 1 at radius √2: (2/π)(asin(1/√2) + (1/√2)(1/√2)) ≈ 0.818.
    let expect = 2.0 / std::f64::consts::PI * ((0.5f64).sqrt().asin() + 0.5);
    assert!((inner - expect).abs() < 0.04, "inner mass {inner} vs {expect}");
}

/// First-jump step of amplitude damping from the excited state follows
/// `P(K ≤ k) = 1 − exp(−γ k dt)` exactly; KS distance over 10⁴ trajectories.
#[test]
fn amplitude_damping_waiting_time_ks() {
    let gamma = 0.7;
    let dt = 0.01;
    let model = LindbladModel::amplitude_damping(gamma).unwrap();
    let eng = Unraveler::new(&model, dt).unwrap();
    let n = 10_000;
    let mut steps: Vec<u64> = (0..n)
        .map(|i| {
            let mut t = Trajectory::new(PureState::basis(2, 1).unwrap(), JumpNoise::new(job_seed(42, 0, i, Purpose::JumpNoise)));
            loop {
                match t.step(&eng) {
                    StepOutcome::Drift => {}
                    StepOutcome::Jump(e) => break e.step,
                    StepOutcome::DarkState { .. } => panic!("no dark state from the excited state"),
                }
            }
        })
        .collect();
    steps.sort_unstable();
    let mut ks = 0.0f64;
    let mut i = 0;
    while i < steps.len() {
        let k = steps[i];
        let below = i as f64 / n as f64;
        while i < steps.len() && steps[i] == k {
            i += 1;
        }
        let at = i as f64 / n as f64;
        let cdf = 1.0 - (-gamma * k as f64 * dt).exp();
        let cdf_prev = 1.0 - (-gamma * (k - 1) as f64 * dt).exp();
        ks = ks.max((at - cdf).abs()).max((below - cdf_prev).abs());
    }
    // 1.63/√n is the 1% critical value.
    assert!(ks < 1.63 / (n as f64).sqrt(), "KS distance {ks}");
}

fn mbl4() -> LindbladModel {
    build_mbl_chain(&MblParams::new(4, 2.0), &sample_disorder(4, 3)).unwrap()
}

#[test]
fn ensemble_matches_master_equation() {
    let model = mbl4();
    let psi0 = neel_state(model.basis()).unwrap();
    let exact = evolve_density(&model, &DensityMatrix::from_pure(&psi0).unwrap(), 5.0, 0.01).unwrap();
    let states = unravel_ensemble(&model, &psi0, 5.0, 2000, 0.01, 9).unwrap();
    let d = trace_distance(&ensemble_average(&states).unwrap(), &exact).unwrap();
    assert!(d <= 0.05, "trace distance {d}");
}

/// Error at n/4 over error at n, averaged over independent seeds, is near 2.
#[test]
fn ensemble_error_scales_as_inverse_sqrt_n() {
    let model = mbl4();
    let psi0 = neel_state(model.basis()).unwrap();
    let exact = evolve_density(&model, &DensityMatrix::from_pure(&psi0).unwrap(), 2.0, 0.01).unwrap();
    let err = |n: usize, seed: u64| {
        let s = unravel_ensemble(&model, &psi0, 2.0, n, 0.01, seed).unwrap();
        trace_distance(&ensemble_average(&s).unwrap(), &exact).unwrap()
    };
    let reps = 12;
    let small: f64 = (0..reps).map(|r| err(250, 100 + r)).sum::<f64>() / reps as f64;
    let large: f64 = (0..reps).map(|r| err(1000, 200 + r)).sum::<f64>() / reps as f64;
    let ratio = small / large;
    assert!((1.4..=2.6).contains(&ratio), "ratio {ratio} ({small} / {large})");
}
