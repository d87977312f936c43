//! Dense complex operator algebra shared by every other module.

use faer::prelude::*;
use faer::{complex_native::c64, Mat, Side};
use ndarray::{Array1, Array2, ArrayView1, Axis};
use num_complex::Complex64 as C64;

use crate::{Error, Result};

/// Largest dimension kept as a dense matrix.
pub const DENSE_MAX_DIM: usize = 4096;

/// Largest dimension a Kronecker product may produce.
pub const KRON_MAX_DIM: usize = 1 << 13;

/// Entrywise tolerance for the Hermitian flag.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// Squared norms below this are treated as a vanished state.
pub const NORM_FLOOR: f64 = 1e-300;

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Square complex matrix with an optional Hermitian hint.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexOperator {
    entries: Array2<C64>,
    hermitian: Option<bool>,
}

impl ComplexOperator {
    pub fn from_dense(entries: Array2<C64>) -> Result<Self> {
        let (r, c) = entries.dim();
        if r != c || r == 0 {
            return Err(Error::DimensionMismatch(format!(
                "operator must be square and non-empty, got {r}x{c}"
            )));
        }
        if r > KRON_MAX_DIM {
            return Err(Error::SizeLimit {
                what: "operator dim",
                requested: r,
                limit: KRON_MAX_DIM,
            });
        }
        Ok(Self {
            entries,
            hermitian: None,
        })
    }

    /// Builds an operator and sets the Hermitian flag after checking it.
    pub fn hermitian(entries: Array2<C64>) -> Result<Self> {
        let mut op = Self::from_dense(entries)?;
        let defect = op.hermiticity_defect();
        if defect > HERMITIAN_TOL {
            return Err(Error::invalid(
                "hermitian_flag",
                format!("max |A - A^dagger| = {defect:e} exceeds {HERMITIAN_TOL:e}"),
            ));
        }
        op.hermitian = Some(true);
        Ok(op)
    }

    pub fn from_real(entries: Array2<f64>) -> Result<Self> {
        Self::from_dense(entries.mapv(|x| C64::new(x, 0.0)))
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            entries: Array2::zeros((dim, dim)),
            hermitian: Some(true),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            entries: Array2::eye(dim),
            hermitian: Some(true),
        }
    }

    pub fn from_diag(diag: &[C64]) -> Self {
        let mut entries = Array2::zeros((diag.len(), diag.len()));
        for (i, &d) in diag.iter().enumerate() {
            entries[[i, i]] = d;
        }
        Self {
            entries,
            hermitian: None,
        }
    }

    pub fn from_real_diag(diag: &[f64]) -> Self {
        let c: Vec<C64> = diag.iter().map(|&d| C64::new(d, 0.0)).collect();
        let mut op = Self::from_diag(&c);
        op.hermitian = Some(true);
        op
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    #[inline]
    pub fn entries(&self) -> &Array2<C64> {
        &self.entries
    }

    pub fn into_entries(self) -> Array2<C64> {
        self.entries
    }

    pub fn hermitian_hint(&self) -> Option<bool> {
        self.hermitian
    }

    /// `max |A - A^dagger|` over entries.
    pub fn hermiticity_defect(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in i..n {
                let d = (self.entries[[i, j]] - self.entries[[j, i]].conj()).norm();
                worst = worst.max(d);
            }
        }
        worst
    }

    pub fn adjoint(&self) -> Self {
        Self {
            entries: self.entries.t().mapv(|z| z.conj()),
            hermitian: self.hermitian,
        }
    }

    pub fn transpose(&self) -> Self {
        Self {
            entries: self.entries.t().to_owned(),
            hermitian: None,
        }
    }

    pub fn conj(&self) -> Self {
        Self {
            entries: self.entries.mapv(|z| z.conj()),
            hermitian: self.hermitian,
        }
    }

    pub fn matmul(&self, rhs: &Self) -> Self {
        Self {
            entries: self.entries.dot(&rhs.entries),
            hermitian: None,
        }
    }

    pub fn add(&self, rhs: &Self) -> Self {
        Self {
            entries: &self.entries + &rhs.entries,
            hermitian: None,
        }
    }

    pub fn sub(&self, rhs: &Self) -> Self {
        Self {
            entries: &self.entries - &rhs.entries,
            hermitian: None,
        }
    }

    pub fn scale(&self, s: C64) -> Self {
        Self {
            entries: self.entries.mapv(|z| z * s),
            hermitian: if s.im == 0.0 { self.hermitian } else { None },
        }
    }

    pub fn commutator(&self, rhs: &Self) -> Self {
        self.matmul(rhs).sub(&rhs.matmul(self))
    }

    pub fn apply(&self, v: &Array1<C64>) -> Array1<C64> {
        self.entries.dot(v)
    }

    pub fn trace(&self) -> C64 {
        self.entries.diag().sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0f64, |m, z| m.max(z.norm()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        max_abs_diff(&self.entries, &other.entries)
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Induced 1-norm (maximum absolute column sum).
    pub fn norm_one(&self) -> f64 {
        self.entries
            .axis_iter(Axis(1))
            .map(|col| col.iter().map(|z| z.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

pub fn max_abs_diff(a: &Array2<C64>, b: &Array2<C64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .fold(0.0f64, |m, (x, y)| m.max((x - y).norm()))
}

/// Coordinate-list builder used while constructing model operators.
#[derive(Debug, Clone)]
pub struct SparseBuilder {
    dim: usize,
    triplets: Vec<(usize, usize, C64)>,
}

impl SparseBuilder {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            triplets: Vec::new(),
        }
    }

    pub fn push(&mut self, row: usize, col: usize, value: C64) {
        debug_assert!(row < self.dim && col < self.dim);
        if value != C64::new(0.0, 0.0) {
            self.triplets.push((row, col, value));
        }
    }

    pub fn push_real(&mut self, row: usize, col: usize, value: f64) {
        self.push(row, col, C64::new(value, 0.0));
    }

    pub fn nnz(&self) -> usize {
        self.triplets.len()
    }

    /// Sums duplicates into a dense operator.
    pub fn to_dense(&self) -> Result<ComplexOperator> {
        if self.dim > DENSE_MAX_DIM {
            return Err(Error::SizeLimit {
                what: "dense dim",
                requested: self.dim,
                limit: DENSE_MAX_DIM,
            });
        }
        let mut entries = Array2::zeros((self.dim, self.dim));
        for &(i, j, v) in &self.triplets {
            entries[[i, j]] += v;
        }
        ComplexOperator::from_dense(entries)
    }
}

/// `(a ⊗ b)[i*db + k, j*db + l] = a[i, j] * b[k, l]`.
pub fn kron(a: &ComplexOperator, b: &ComplexOperator) -> Result<ComplexOperator> {
    let (da, db) = (a.dim(), b.dim());
    let dim = da
        .checked_mul(db)
        .filter(|&d| d <= KRON_MAX_DIM)
        .ok_or(Error::SizeLimit {
            what: "kron dim",
            requested: da.saturating_mul(db),
            limit: KRON_MAX_DIM,
        })?;
    let mut out = Array2::zeros((dim, dim));
    for ((i, j), &x) in a.entries.indexed_iter() {
        if x == C64::new(0.0, 0.0) {
            continue;
        }
        for ((k, l), &y) in b.entries.indexed_iter() {
            out[[i * db + k, j * db + l]] = x * y;
        }
    }
    let hermitian = match (a.hermitian, b.hermitian) {
        (Some(true), Some(true)) => Some(true),
        _ => None,
    };
    Ok(ComplexOperator {
        entries: out,
        hermitian,
    })
}

/// Kronecker product of a list, left to right.
pub fn kron_all(ops: &[&ComplexOperator]) -> Result<ComplexOperator> {
    let (first, rest) = ops
        .split_first()
        .ok_or(Error::Empty("kron_all operand list"))?;
    rest.iter()
        .try_fold((*first).clone(), |acc, op| kron(&acc, op))
}

// Padé coefficients and the 1-norm bounds under which each degree reaches
// unit-roundoff backward error (Higham 2005).
const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const PADE9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA: [(f64, usize); 4] = [
    (1.495585217958292e-2, 3),
    (2.539_398_330_063_23e-1, 5),
    (9.504178996162932e-1, 7),
    (2.097847961257068e0, 9),
];
const THETA13: f64 = 5.371920351148152;

/// `exp(t * a)` by scaling and squaring with a diagonal Padé approximant.
pub fn matexp(a: &ComplexOperator, t: f64) -> Result<ComplexOperator> {
    if !t.is_finite() || !a.is_finite() {
        return Err(Error::NonFinite("matexp input"));
    }
    let n = a.dim();
    if n > DENSE_MAX_DIM {
        return Err(Error::SizeLimit {
            what: "matexp dim",
            requested: n,
            limit: DENSE_MAX_DIM,
        });
    }
    let at = a.entries.mapv(|z| z * t);
    let norm = ComplexOperator {
        entries: at.clone(),
        hermitian: None,
    }
    .norm_one();
    if norm == 0.0 {
        return Ok(ComplexOperator::identity(n));
    }

    let eye: Array2<C64> = Array2::eye(n);
    let a2 = at.dot(&at);
    let (u, v, squarings) = if let Some(&(_, m)) = THETA.iter().find(|(th, _)| norm <= *th) {
        let b: &[f64] = match m {
            3 => &PADE3,
            5 => &PADE5,
            7 => &PADE7,
            _ => &PADE9,
        };
        let mut powers = vec![eye.clone(), a2.clone()];
        while powers.len() * 2 <= m {
            let next = powers.last().unwrap().dot(&a2);
            powers.push(next);
        }
        let mut odd = Array2::<C64>::zeros((n, n));
        let mut even = Array2::<C64>::zeros((n, n));
        for (k, p) in powers.iter().enumerate() {
            even.scaled_add(C64::new(b[2 * k], 0.0), p);
            odd.scaled_add(C64::new(b[2 * k + 1], 0.0), p);
        }
        (at.dot(&odd), even, 0u32)
    } else {
        let s = (norm / THETA13).log2().ceil().max(0.0) as u32;
        let scale = C64::new(0.5f64.powi(s as i32), 0.0);
        let a1 = at.mapv(|z| z * scale);
        let a2 = a1.dot(&a1);
        let a4 = a2.dot(&a2);
        let a6 = a4.dot(&a2);
        let b = |k: usize| C64::new(PADE13[k], 0.0);
        let inner_u = &a6 * b(13) + &a4 * b(11) + &a2 * b(9);
        let u_part = a6.dot(&inner_u) + &a6 * b(7) + &a4 * b(5) + &a2 * b(3) + &eye * b(1);
        let u = a1.dot(&u_part);
        let inner_v = &a6 * b(12) + &a4 * b(10) + &a2 * b(8);
        let v = a6.dot(&inner_v) + &a6 * b(6) + &a4 * b(4) + &a2 * b(2) + &eye * b(0);
        (u, v, s)
    };

    let mut r = solve(&(&v - &u), &(&v + &u))?;
    for _ in 0..squarings {
        r = r.dot(&r);
    }
    let out = ComplexOperator {
        entries: r,
        hermitian: None,
    };
    if !out.is_finite() {
        return Err(Error::NonFinite("matexp result"));
    }
    Ok(out)
}

/// Solves `a x = b` by partial-pivot LU.
pub fn solve(a: &Array2<C64>, b: &Array2<C64>) -> Result<Array2<C64>> {
    let fa = to_faer(a);
    let fb = to_faer(b);
    let x = fa.partial_piv_lu().solve(&fb);
    let out = from_faer(&x);
    if out.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite("linear solve"));
    }
    Ok(out)
}

pub(crate) fn to_faer(a: &Array2<C64>) -> Mat<c64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| c64::from(a[[i, j]]))
}

pub(crate) fn from_faer(m: &Mat<c64>) -> Array2<C64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m.read(i, j).into())
}

/// Eigenvalues of a general complex matrix, without eigenvectors.
pub fn eigenvalues(a: &Array2<C64>) -> Vec<C64> {
    to_faer(a)
        .eigenvalues::<c64>()
        .into_iter()
        .map(Into::into)
        .collect()
}

/// Eigenvalues of a Hermitian matrix (only the lower triangle is read).
pub fn hermitian_eigenvalues(a: &Array2<C64>) -> Vec<f64> {
    to_faer(a).selfadjoint_eigenvalues(Side::Lower)
}

/// Pure state with a cached squared norm.
///
/// Between quantum jumps the norm decays, so the cached value is allowed to
/// sit below one; [`PureState::normalized`] restores it.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    amplitudes: Array1<C64>,
    norm_sq: f64,
}

impl PureState {
    pub fn new(amplitudes: Array1<C64>) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(Error::Empty("state amplitudes"));
        }
        let norm_sq = squared_norm(amplitudes.view());
        if !norm_sq.is_finite() {
            return Err(Error::NonFinite("state amplitudes"));
        }
        Ok(Self { amplitudes, norm_sq })
    }

    pub fn basis(dim: usize, index: usize) -> Result<Self> {
        if index >= dim {
            return Err(Error::DimensionMismatch(format!(
                "basis index {index} out of range for dim {dim}"
            )));
        }
        let mut amps = Array1::zeros(dim);
        amps[index] = C64::new(1.0, 0.0);
        Ok(Self {
            amplitudes: amps,
            norm_sq: 1.0,
        })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    #[inline]
    pub fn norm_sq(&self) -> f64 {
        self.norm_sq
    }

    #[inline]
    pub fn amplitudes(&self) -> &Array1<C64> {
        &self.amplitudes
    }

    pub fn as_slice(&self) -> &[C64] {
        self.amplitudes.as_slice().expect("contiguous amplitudes")
    }

    pub fn into_amplitudes(self) -> Array1<C64> {
        self.amplitudes
    }

    /// Overwrites the amplitudes in place and refreshes the cached norm.
    pub fn set_amplitudes(&mut self, f: impl FnOnce(&mut [C64])) {
        f(self.amplitudes.as_slice_mut().expect("contiguous amplitudes"));
        self.norm_sq = squared_norm(self.amplitudes.view());
    }

    pub fn normalized(&self) -> Result<Self> {
        if self.norm_sq < NORM_FLOOR {
            return Err(Error::DegenerateState(self.norm_sq));
        }
        let s = 1.0 / self.norm_sq.sqrt();
        let amplitudes = self.amplitudes.mapv(|z| z * s);
        let norm_sq = squared_norm(amplitudes.view());
        Ok(Self { amplitudes, norm_sq })
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &PureState) -> C64 {
        self.amplitudes
            .iter()
            .zip(other.amplitudes.iter())
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// `|psi><psi| / <psi|psi>`.
    pub fn projector(&self) -> Result<Array2<C64>> {
        let psi = self.normalized()?;
        let n = psi.dim();
        Ok(Array2::from_shape_fn((n, n), |(i, j)| {
            psi.amplitudes[i] * psi.amplitudes[j].conj()
        }))
    }
}

#[inline]
pub fn squared_norm(v: ArrayView1<C64>) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// `<psi|O|psi> / <psi|psi>`, real part.
pub fn expectation(o: &ComplexOperator, psi: &PureState) -> Result<f64> {
    if o.dim() != psi.dim() {
        return Err(Error::DimensionMismatch(format!(
            "operator dim {} vs state dim {}",
            o.dim(),
            psi.dim()
        )));
    }
    if psi.norm_sq < NORM_FLOOR {
        return Err(Error::DegenerateState(psi.norm_sq));
    }
    let z = raw_expectation(o.entries(), psi.as_slice());
    Ok(z.re / psi.norm_sq)
}

/// Unnormalized complex `<psi|O|psi>`.
pub fn raw_expectation(o: &Array2<C64>, psi: &[C64]) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    for (row, &pi) in o.outer_iter().zip(psi.iter()) {
        let mut r = C64::new(0.0, 0.0);
        for (&oij, &pj) in row.iter().zip(psi.iter()) {
            r += oij * pj;
        }
        acc += pi.conj() * r;
    }
    acc
}

/// Density matrix checked to be trace-one, Hermitian and positive
/// semidefinite to `1e-8`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(Array2<C64>);

pub const DENSITY_TOL: f64 = 1e-8;

impl DensityMatrix {
    pub fn new(m: Array2<C64>) -> Result<Self> {
        let rho = Self::new_unchecked(m)?;
        rho.validate(DENSITY_TOL)?;
        Ok(rho)
    }

    /// Shape check only.
    pub fn new_unchecked(m: Array2<C64>) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "density matrix must be square, got {:?}",
                m.dim()
            )));
        }
        Ok(Self(m))
    }

    pub fn from_pure(psi: &PureState) -> Result<Self> {
        Ok(Self(psi.projector()?))
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self(Array2::eye(dim).mapv(|z: C64| z / dim as f64))
    }

    pub fn validate(&self, tol: f64) -> Result<()> {
        let tr = self.trace();
        if (tr - C64::new(1.0, 0.0)).norm() > tol {
            return Err(Error::invalid("density matrix", format!("trace {tr} != 1")));
        }
        let h = self.hermiticity_defect();
        if h > tol {
            return Err(Error::invalid(
                "density matrix",
                format!("hermiticity defect {h:e}"),
            ));
        }
        let min = self.min_eigenvalue();
        if min < -tol {
            return Err(Error::invalid(
                "density matrix",
                format!("negative eigenvalue {min:e}"),
            ));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &Array2<C64> {
        &self.0
    }

    pub fn into_matrix(self) -> Array2<C64> {
        self.0
    }

    pub fn trace(&self) -> C64 {
        self.0.diag().sum()
    }

    pub fn hermiticity_defect(&self) -> f64 {
        max_abs_diff(&self.0, &self.0.t().mapv(|z| z.conj()))
    }

    pub fn min_eigenvalue(&self) -> f64 {
        hermitian_eigenvalues(&hermitian_part(&self.0))
            .into_iter()
            .fold(f64::INFINITY, f64::min)
    }
}

fn hermitian_part(m: &Array2<C64>) -> Array2<C64> {
    (m + &m.t().mapv(|z| z.conj())).mapv(|z| z * 0.5)
}

/// `½ Σ |σ_i(ρ_a - ρ_b)|`; the difference is Hermitian so its singular
/// values are the absolute eigenvalues.
pub fn trace_distance(rho_a: &DensityMatrix, rho_b: &DensityMatrix) -> Result<f64> {
    if rho_a.dim() != rho_b.dim() {
        return Err(Error::DimensionMismatch(format!(
            "density matrices of dim {} and {}",
            rho_a.dim(),
            rho_b.dim()
        )));
    }
    let diff = hermitian_part(&(&rho_a.0 - &rho_b.0));
    let sum: f64 = hermitian_eigenvalues(&diff).iter().map(|x| x.abs()).sum();
    Ok(0.5 * sum)
}

/// Dense matrix stored column-major with split real/imaginary parts, for the
/// per-step matrix-vector products that dominate trajectory runtime.
#[derive(Debug, Clone)]
pub struct SplitMatrix {
    dim: usize,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl SplitMatrix {
    pub fn new(op: &ComplexOperator) -> Self {
        let n = op.dim();
        let mut re = Vec::with_capacity(n * n);
        let mut im = Vec::with_capacity(n * n);
        for j in 0..n {
            for i in 0..n {
                let z = op.entries()[[i, j]];
                re.push(z.re);
                im.push(z.im);
            }
        }
        Self { dim: n, re, im }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `y = M x` using caller-provided split accumulators.
    pub fn apply(&self, x: &[C64], y: &mut [C64], acc: &mut SplitScratch) {
        let n = self.dim;
        debug_assert_eq!(x.len(), n);
        debug_assert_eq!(y.len(), n);
        acc.resize(n);
        let (yr, yi) = (&mut acc.re[..n], &mut acc.im[..n]);
        yr.fill(0.0);
        yi.fill(0.0);
        for (j, xj) in x.iter().enumerate() {
            let (xr, xi) = (xj.re, xj.im);
            if xr == 0.0 && xi == 0.0 {
                continue;
            }
            let cr = &self.re[j * n..(j + 1) * n];
            let ci = &self.im[j * n..(j + 1) * n];
            for (((yr, yi), &cr), &ci) in yr.iter_mut().zip(yi.iter_mut()).zip(cr).zip(ci) {
                *yr += cr * xr - ci * xi;
                *yi += cr * xi + ci * xr;
            }
        }
        for ((y, &r), &i) in y.iter_mut().zip(yr.iter()).zip(yi.iter()) {
            *y = C64::new(r, i);
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct SplitScratch {
    re: Vec<f64>,
    im: Vec<f64>,
}

impl SplitScratch {
    fn resize(&mut self, n: usize) {
        if self.re.len() < n {
            self.re.resize(n, 0.0);
            self.im.resize(n, 0.0);
        }
    }
}

/// Spin-1/2 matrices in the `{|0>, |1>}` basis.
pub mod pauli {
    use super::*;

    pub fn sigma_x() -> ComplexOperator {
        ComplexOperator::hermitian(ndarray::array![
            [C64::new(0.0, 0.0), C64::new(1.0, 0.0)],
            [C64::new(1.0, 0.0), C64::new(0.0, 0.0)]
        ])
        .expect("sigma_x")
    }

    pub fn sigma_y() -> ComplexOperator {
        ComplexOperator::hermitian(ndarray::array![
            [C64::new(0.0, 0.0), -I],
            [I, C64::new(0.0, 0.0)]
        ])
        .expect("sigma_y")
    }

    pub fn sigma_z() -> ComplexOperator {
        ComplexOperator::from_real_diag(&[1.0, -1.0])
    }

    /// Lowering operator `|0><1|`.
    pub fn sigma_minus() -> ComplexOperator {
        let mut b = SparseBuilder::new(2);
        b.push_real(0, 1, 1.0);
        b.to_dense().expect("sigma_minus")
    }

    pub fn number() -> ComplexOperator {
        ComplexOperator::from_real_diag(&[0.0, 1.0])
    }
}
