//! Vectorized Lindbladian, direct master-equation integration, and the full
//! complex spectrum.
//!
//! Column stacking throughout: `vec(ρ)[i + N j] = ρ[i, j]`, so that
//! `vec(A ρ B) = (Bᵀ ⊗ A) vec(ρ)`.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::linalg::{matexp, to_faer, ComplexOperator, DensityMatrix};
use crate::models::LindbladModel;
use crate::{Error, Result, C64};

/// Largest superoperator dimension `N²` accepted (dense, ~400 MB at the cap).
pub const MAX_SUPEROPERATOR_DIM: usize = 5000;

/// Eigenvalue magnitude treated as zero for the stationary-state and
/// dissipativity checks.
pub const SPECTRUM_TOL: f64 = 1e-8;

/// Drift below zero tolerated in the smallest eigenvalue of an evolved state.
pub const PSD_DRIFT_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct Superoperator {
    hilbert_dim: usize,
    matrix: ComplexOperator,
}

impl Superoperator {
    pub fn hilbert_dim(&self) -> usize {
        self.hilbert_dim
    }

    pub fn matrix(&self) -> &ComplexOperator {
        &self.matrix
    }

    pub fn apply(&self, rho: &Array2<C64>) -> Array2<C64> {
        devectorize(&self.matrix.apply(&vectorize(rho)), self.hilbert_dim)
    }

    /// `max |vec(I)† · matrix|`; zero for a trace-preserving generator.
    pub fn trace_row_defect(&self) -> f64 {
        let n = self.hilbert_dim;
        let m = self.matrix.entries();
        (0..n * n)
            .map(|col| (0..n).map(|i| m[[i + n * i, col]]).sum::<C64>().norm())
            .fold(0.0, f64::max)
    }
}

pub fn vectorize(rho: &Array2<C64>) -> Array1<C64> {
    rho.t().iter().copied().collect()
}

pub fn devectorize(v: &Array1<C64>, n: usize) -> Array2<C64> {
    Array2::from_shape_fn((n, n), |(i, j)| v[i + n * j])
}

/// Adds `coef · (Bᵀ ⊗ A)`, the matrix of `ρ ↦ coef · A ρ B`, skipping zeros.
fn add_sandwich(out: &mut Array2<C64>, coef: C64, a: &Array2<C64>, b: &Array2<C64>) {
    let n = a.nrows();
    let nz = |m: &Array2<C64>| -> Vec<(usize, usize, C64)> {
        m.indexed_iter()
            .filter(|(_, z)| **z != C64::new(0.0, 0.0))
            .map(|((r, c), z)| (r, c, *z))
            .collect()
    };
    let a_nz = nz(a);
    let b_nz = nz(b);
    for &(l, j, bv) in &b_nz {
        let cb = coef * bv;
        for &(i, k, av) in &a_nz {
            out[[i + n * j, k + n * l]] += cb * av;
        }
    }
}

pub fn build_superoperator(model: &LindbladModel) -> Result<Superoperator> {
    let n = model.dim();
    let dim = n * n;
    if dim > MAX_SUPEROPERATOR_DIM {
        return Err(Error::SizeLimit {
            what: "superoperator dim",
            requested: dim,
            limit: MAX_SUPEROPERATOR_DIM,
        });
    }
    let eye: Array2<C64> = Array2::eye(n);
    let h = model.hamiltonian().entries();
    let mut s = Array2::<C64>::zeros((dim, dim));
    let i = C64::new(0.0, 1.0);
    add_sandwich(&mut s, -i, h, &eye);
    add_sandwich(&mut s, i, &eye, h);
    for jump in model.jumps() {
        let l = jump.operator.entries();
        let ldag = jump.operator.adjoint();
        let ltl = ldag.matmul(&jump.operator);
        let g = C64::new(jump.rate, 0.0);
        add_sandwich(&mut s, g, l, ldag.entries());
        add_sandwich(&mut s, -0.5 * g, ltl.entries(), &eye);
        add_sandwich(&mut s, -0.5 * g, &eye, ltl.entries());
    }
    Ok(Superoperator {
        hilbert_dim: n,
        matrix: ComplexOperator::from_dense(s)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub eigenvalues: Vec<C64>,
    pub source_label: String,
    pub hilbert_dim: usize,
}

impl Spectrum {
    pub fn new(eigenvalues: Vec<C64>, source_label: impl Into<String>, hilbert_dim: usize) -> Self {
        Self {
            eigenvalues,
            source_label: source_label.into(),
            hilbert_dim,
        }
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn max_abs_imag(&self) -> f64 {
        self.eigenvalues.iter().map(|z| z.im.abs()).fold(0.0, f64::max)
    }

    pub fn max_real(&self) -> f64 {
        self.eigenvalues
            .iter()
            .map(|z| z.re)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_abs(&self) -> f64 {
        self.eigenvalues
            .iter()
            .map(|z| z.norm())
            .fold(f64::INFINITY, f64::min)
    }

    /// Copy with the eigenvalue closest to zero removed.
    pub fn without_stationary(&self) -> Self {
        let mut eigenvalues = self.eigenvalues.clone();
        if let Some((k, _)) = eigenvalues
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
        {
            eigenvalues.remove(k);
        }
        Self {
            eigenvalues,
            source_label: self.source_label.clone(),
            hilbert_dim: self.hilbert_dim,
        }
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(BufWriter::new(file));
        w.write_record(["re", "im"])?;
        for z in &self.eigenvalues {
            w.write_record([z.re.to_string(), z.im.to_string()])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>, source_label: impl Into<String>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = csv::Reader::from_reader(BufReader::new(file));
        let headers = r.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["re", "im"] {
            return Err(Error::Config(format!(
                "{}: expected header `re,im`, found `{}`",
                path.display(),
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut eigenvalues = Vec::new();
        for rec in r.deserialize() {
            let (re, im): (f64, f64) = rec?;
            eigenvalues.push(C64::new(re, im));
        }
        let n = eigenvalues.len();
        let hilbert_dim = (n as f64).sqrt().round() as usize;
        Ok(Self::new(eigenvalues, source_label, hilbert_dim))
    }
}

/// Metadata written next to a spectrum CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSidecar {
    pub model_label: String,
    pub seed: Option<u64>,
    pub sites: usize,
    pub disorder_strength: Option<f64>,
    pub gamma: f64,
}

/// All `N²` eigenvalues, with a residual check `‖𝓛v − λv‖ ≤ 1e-8 ‖𝓛‖` on ten
/// sampled eigenpairs and the Lindbladian invariants (a zero eigenvalue and
/// no eigenvalue in the right half-plane).
pub fn spectrum(superop: &Superoperator, label: &str) -> Result<Spectrum> {
    let m = superop.matrix.entries();
    let dim = m.nrows();
    let fail = |reason: String| Error::Eigensolver {
        label: label.to_string(),
        reason,
    };
    let fm = to_faer(m);
    let evd = fm.eigendecomposition::<faer::complex_native::c64>();
    let s = evd.s().column_vector();
    let u = evd.u();
    let eigenvalues: Vec<C64> = (0..dim).map(|k| s.read(k).into()).collect();
    if eigenvalues.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(fail("non-finite eigenvalue".into()));
    }

    let scale = m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    let samples = dim.min(10);
    for t in 0..samples {
        let k = t * dim / samples;
        let v: Array1<C64> = (0..dim).map(|r| u.read(r, k).into()).collect();
        let vn = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let lv = m.dot(&v);
        let res = lv
            .iter()
            .zip(v.iter())
            .map(|(a, b)| (a - eigenvalues[k] * b).norm_sqr())
            .sum::<f64>()
            .sqrt()
            / vn;
        if !(res <= 1e-8 * scale) {
            return Err(fail(format!(
                "residual {res:e} for eigenvalue {} exceeds 1e-8 * {scale:e}",
                eigenvalues[k]
            )));
        }
    }

    let spec = Spectrum::new(eigenvalues, label, superop.hilbert_dim);
    if spec.min_abs() > SPECTRUM_TOL {
        return Err(fail(format!(
            "no stationary eigenvalue (min |λ| = {:e})",
            spec.min_abs()
        )));
    }
    if spec.max_real() > SPECTRUM_TOL {
        return Err(fail(format!(
            "eigenvalue with positive real part {:e}",
            spec.max_real()
        )));
    }
    Ok(spec)
}

/// `exp(𝓛 dt)` precomputed for repeated application.
#[derive(Debug, Clone)]
pub struct DensityPropagator {
    superop: Superoperator,
    step: ComplexOperator,
    dt: f64,
}

impl DensityPropagator {
    pub fn new(model: &LindbladModel, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid("dt", format!("must be positive, got {dt}")));
        }
        let superop = build_superoperator(model)?;
        let step = matexp(superop.matrix(), dt)?;
        Ok(Self { superop, step, dt })
    }

    pub fn superoperator(&self) -> &Superoperator {
        &self.superop
    }

    /// Evolves `rho0` for `t_final` in steps of `dt`, finishing with one
    /// shorter step when `t_final` is not a multiple of `dt`.
    pub fn evolve(&self, rho0: &DensityMatrix, t_final: f64) -> Result<DensityMatrix> {
        if !(t_final >= 0.0 && t_final.is_finite()) {
            return Err(Error::invalid("t_final", format!("must be >= 0, got {t_final}")));
        }
        rho0.validate(crate::linalg::DENSITY_TOL)?;
        let n = self.superop.hilbert_dim;
        if rho0.dim() != n {
            return Err(Error::DimensionMismatch(format!(
                "state dim {} vs model dim {n}",
                rho0.dim()
            )));
        }
        if t_final == 0.0 {
            return Ok(rho0.clone());
        }
        let steps = (t_final / self.dt + 1e-9).floor() as usize;
        let rest = t_final - steps as f64 * self.dt;
        let mut v = vectorize(rho0.matrix());
        for _ in 0..steps {
            v = self.step.apply(&v);
        }
        if rest > 1e-12 * self.dt {
            v = matexp(self.superop.matrix(), rest)?.apply(&v);
        }
        let rho = DensityMatrix::new_unchecked(devectorize(&v, n))?;
        let tr = rho.trace();
        let herm = rho.hermiticity_defect();
        let min = rho.min_eigenvalue();
        if (tr - C64::new(1.0, 0.0)).norm() > 1e-8 || herm > 1e-8 || min < -PSD_DRIFT_TOL {
            return Err(Error::Instability(format!(
                "evolved state drifted: trace {tr}, hermiticity {herm:e}, min eigenvalue {min:e}"
            )));
        }
        Ok(rho)
    }
}

pub fn evolve_density(
    model: &LindbladModel,
    rho0: &DensityMatrix,
    t_final: f64,
    dt: f64,
) -> Result<DensityMatrix> {
    DensityPropagator::new(model, dt)?.evolve(rho0, t_final)
}
