//! Lindblad models: the integrable pair-swap chain and the disordered
//! fermion chain with pair-synchronizing dissipators.
//!
//! Site `l` (0-based) of an `M`-site chain is stored in bit `M - 1 - l` of a
//! basis pattern, so site 0 is the leftmost Kronecker factor and the
//! lexicographic order of occupation strings equals numeric pattern order.
//! Local order is `|0>` (empty / down) before `|1>` (occupied / up).

use std::collections::HashMap;

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::linalg::{kron_all, ComplexOperator, PureState, SparseBuilder, HERMITIAN_TOL};
use crate::rng::{self, Purpose};
use crate::{Error, Result, C64};

/// Default largest chain for the integrable model (Hilbert dim `2^10`).
pub const MAX_SPIN_SITES: usize = 10;

/// Default largest chain for the fermion model (Hilbert dim 924 at `M = 12`).
pub const MAX_FERMION_SITES: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisKind {
    SpinChain,
    HalfFillingFermions,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasisDescriptor {
    kind: BasisKind,
    sites: usize,
    patterns: Vec<u64>,
    index: HashMap<u64, usize>,
}

impl BasisDescriptor {
    pub fn spin_chain(sites: usize) -> Result<Self> {
        if sites == 0 || sites > 20 {
            return Err(Error::invalid("sites", format!("{sites} outside 1..=20")));
        }
        let patterns: Vec<u64> = (0..1u64 << sites).collect();
        Ok(Self::from_patterns(BasisKind::SpinChain, sites, patterns))
    }

    /// Configurations with exactly `sites / 2` particles, in lexicographic
    /// order of their occupation strings.
    pub fn half_filling(sites: usize) -> Result<Self> {
        if sites < 2 || !sites.is_multiple_of(2) {
            return Err(Error::invalid(
                "sites",
                format!("half filling needs an even chain of at least 2 sites, got {sites}"),
            ));
        }
        if sites > 20 {
            return Err(Error::invalid("sites", format!("{sites} exceeds 20")));
        }
        let half = (sites / 2) as u32;
        let patterns: Vec<u64> = (0..1u64 << sites)
            .filter(|p| p.count_ones() == half)
            .collect();
        Ok(Self::from_patterns(
            BasisKind::HalfFillingFermions,
            sites,
            patterns,
        ))
    }

    fn from_patterns(kind: BasisKind, sites: usize, patterns: Vec<u64>) -> Self {
        let index = patterns.iter().enumerate().map(|(i, &p)| (p, i)).collect();
        Self {
            kind,
            sites,
            patterns,
            index,
        }
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn dim(&self) -> usize {
        self.patterns.len()
    }

    pub fn pattern(&self, index: usize) -> u64 {
        self.patterns[index]
    }

    pub fn occupation_table(&self) -> &[u64] {
        &self.patterns
    }

    pub fn index_of(&self, pattern: u64) -> Option<usize> {
        self.index.get(&pattern).copied()
    }

    #[inline]
    pub fn site_bit(&self, site: usize) -> u64 {
        1u64 << (self.sites - 1 - site)
    }

    /// Occupation string with site 0 first, e.g. `"1010"`.
    pub fn format_pattern(&self, pattern: u64) -> String {
        (0..self.sites)
            .map(|l| if pattern & self.site_bit(l) != 0 { '1' } else { '0' })
            .collect()
    }

    pub fn parse_pattern(&self, s: &str) -> Result<u64> {
        if s.len() != self.sites || !s.chars().all(|c| c == '0' || c == '1') {
            return Err(Error::invalid(
                "pattern",
                format!("`{s}` is not a {}-site occupation string", self.sites),
            ));
        }
        Ok(s.chars()
            .enumerate()
            .filter(|(_, c)| *c == '1')
            .fold(0, |p, (l, _)| p | self.site_bit(l)))
    }
}

/// On-site potentials `h_l`, uniform on `[-1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisorderRealization {
    pub values: Vec<f64>,
    pub seed: u64,
}

/// Counter-based: site `l` draws from the stream keyed by `(seed, l)`, so
/// each value is independent of how many others were requested.
pub fn sample_disorder(sites: usize, seed: u64) -> DisorderRealization {
    let values = (0..sites)
        .map(|l| {
            let mut s = rng::stream(rng::derive_seed(seed, &[Purpose::Disorder as u64, l as u64]));
            s.gen_range(-1.0..=1.0)
        })
        .collect();
    DisorderRealization { values, seed }
}

#[derive(Debug, Clone)]
pub struct JumpOperator {
    pub operator: ComplexOperator,
    pub rate: f64,
}

#[derive(Debug, Clone)]
pub struct LindbladModel {
    hamiltonian: ComplexOperator,
    jumps: Vec<JumpOperator>,
    basis: BasisDescriptor,
    label: String,
}

impl LindbladModel {
    pub fn new(
        hamiltonian: ComplexOperator,
        jumps: Vec<JumpOperator>,
        basis: BasisDescriptor,
        label: impl Into<String>,
    ) -> Result<Self> {
        let dim = basis.dim();
        if hamiltonian.dim() != dim {
            return Err(Error::DimensionMismatch(format!(
                "hamiltonian dim {} vs basis dim {dim}",
                hamiltonian.dim()
            )));
        }
        let defect = hamiltonian.hermiticity_defect();
        if defect > HERMITIAN_TOL {
            return Err(Error::invalid(
                "hamiltonian",
                format!("not Hermitian (defect {defect:e})"),
            ));
        }
        for (k, j) in jumps.iter().enumerate() {
            if j.operator.dim() != dim {
                return Err(Error::DimensionMismatch(format!(
                    "jump operator {k} has dim {} vs basis dim {dim}",
                    j.operator.dim()
                )));
            }
            if !(j.rate > 0.0 && j.rate.is_finite()) {
                return Err(Error::invalid(
                    "rate",
                    format!("jump {k} has rate {}", j.rate),
                ));
            }
        }
        Ok(Self {
            hamiltonian,
            jumps,
            basis,
            label: label.into(),
        })
    }

    pub fn hamiltonian(&self) -> &ComplexOperator {
        &self.hamiltonian
    }

    pub fn jumps(&self) -> &[JumpOperator] {
        &self.jumps
    }

    pub fn basis(&self) -> &BasisDescriptor {
        &self.basis
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    /// The same Hamiltonian with every jump channel removed.
    pub fn without_jumps(&self) -> Self {
        Self {
            hamiltonian: self.hamiltonian.clone(),
            jumps: Vec::new(),
            basis: self.basis.clone(),
            label: format!("{} (no jumps)", self.label),
        }
    }

    /// Single decaying qubit, `H = 0`, `L = |0><1|`.
    pub fn amplitude_damping(gamma: f64) -> Result<Self> {
        Self::new(
            ComplexOperator::zeros(2),
            vec![JumpOperator {
                operator: crate::linalg::pauli::sigma_minus(),
                rate: gamma,
            }],
            BasisDescriptor::spin_chain(1)?,
            format!("amplitude_damping(gamma={gamma})"),
        )
    }
}

/// Two-site block of the integrable chain in the `{|00>,|01>,|10>,|11>}`
/// basis: a swap of the mixed states with signs `eta_b1`, `kappa` on the
/// aligned ones.
pub fn integrable_pair_block(eta_b1: f64, kappa: f64) -> ComplexOperator {
    let mut b = SparseBuilder::new(4);
    b.push_real(0, 0, eta_b1);
    b.push_real(1, 2, 1.0);
    b.push_real(2, 1, 1.0);
    b.push_real(3, 3, kappa);
    b.to_dense().expect("4x4 block")
}

pub fn build_integrable_chain(sites: usize, eta_b1: f64, kappa: f64, gamma: f64) -> Result<LindbladModel> {
    if !(2..=MAX_SPIN_SITES).contains(&sites) {
        return Err(Error::invalid(
            "sites",
            format!("integrable chain needs 2..={MAX_SPIN_SITES} sites, got {sites}"),
        ));
    }
    for (name, v) in [("eta_b1", eta_b1), ("kappa", kappa)] {
        if v != 1.0 && v != -1.0 {
            return Err(Error::invalid(name, format!("must be +1 or -1, got {v}")));
        }
    }
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::invalid("gamma", format!("must be positive, got {gamma}")));
    }
    let basis = BasisDescriptor::spin_chain(sites)?;
    let block = integrable_pair_block(eta_b1, kappa);
    let jumps = (0..sites - 1)
        .map(|l| {
            let left = ComplexOperator::identity(1 << l);
            let right = ComplexOperator::identity(1 << (sites - l - 2));
            Ok(JumpOperator {
                operator: kron_all(&[&left, &block, &right])?,
                rate: gamma,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    LindbladModel::new(
        ComplexOperator::zeros(basis.dim()),
        jumps,
        basis,
        format!("integrable(M={sites},eta={eta_b1},kappa={kappa},gamma={gamma})"),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MblParams {
    pub sites: usize,
    pub disorder_strength: f64,
    pub hopping: f64,
    pub interaction: f64,
    pub gamma: f64,
}

impl MblParams {
    pub fn new(sites: usize, disorder_strength: f64) -> Self {
        Self {
            sites,
            disorder_strength,
            hopping: 1.0,
            interaction: 1.0,
            gamma: 0.1,
        }
    }
}

/// Jordan-Wigner sign `(-1)^{# occupied sites left of `site`}`.
fn jw_sign(basis: &BasisDescriptor, pattern: u64, site: usize) -> f64 {
    let above = pattern >> (basis.sites - site);
    if above.count_ones().is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// `c_a^dagger c_b |pattern>` as `(new pattern, sign)`.
pub fn hop(basis: &BasisDescriptor, pattern: u64, a: usize, b: usize) -> Option<(u64, f64)> {
    let bb = basis.site_bit(b);
    if pattern & bb == 0 {
        return None;
    }
    let s1 = jw_sign(basis, pattern, b);
    let p1 = pattern ^ bb;
    let ba = basis.site_bit(a);
    if p1 & ba != 0 {
        return None;
    }
    let s2 = jw_sign(basis, p1, a);
    Some((p1 | ba, s1 * s2))
}

/// Dense matrix of `Σ coef · c_a^dagger c_b` restricted to `basis`.
pub fn quadratic_operator(basis: &BasisDescriptor, terms: &[(usize, usize, f64)]) -> Result<ComplexOperator> {
    let mut b = SparseBuilder::new(basis.dim());
    for (col, &p) in basis.occupation_table().iter().enumerate() {
        for &(a, s, coef) in terms {
            if let Some((q, sign)) = hop(basis, p, a, s) {
                let row = basis.index_of(q).ok_or_else(|| {
                    Error::invalid("basis", "operator leaves the particle-number sector")
                })?;
                b.push_real(row, col, coef * sign);
            }
        }
    }
    b.to_dense()
}

pub fn build_mbl_chain(params: &MblParams, disorder: &DisorderRealization) -> Result<LindbladModel> {
    let m = params.sites;
    if !m.is_multiple_of(2) || m < 2 {
        return Err(Error::invalid(
            "sites",
            format!("fermion chain needs an even number of sites >= 2, got {m}"),
        ));
    }
    if m > MAX_FERMION_SITES {
        return Err(Error::invalid(
            "sites",
            format!("{m} exceeds the {MAX_FERMION_SITES}-site budget"),
        ));
    }
    if disorder.values.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "{} disorder values for {m} sites",
            disorder.values.len()
        )));
    }
    if !(params.gamma > 0.0 && params.gamma.is_finite()) {
        return Err(Error::invalid("gamma", format!("must be positive, got {}", params.gamma)));
    }
    if !(params.disorder_strength >= 0.0 && params.disorder_strength.is_finite()) {
        return Err(Error::invalid(
            "disorder_strength",
            format!("must be finite and >= 0, got {}", params.disorder_strength),
        ));
    }
    let basis = BasisDescriptor::half_filling(m)?;
    let n = basis.dim();

    let mut h = Array2::<f64>::zeros((n, n));
    for (col, &p) in basis.occupation_table().iter().enumerate() {
        let occ = |l: usize| (p & basis.site_bit(l) != 0) as u8 as f64;
        let mut diag = 0.0;
        for l in 0..m {
            diag += params.disorder_strength * disorder.values[l] * occ(l);
        }
        for l in 0..m - 1 {
            diag += params.interaction * occ(l) * occ(l + 1);
        }
        h[[col, col]] = diag;
        for l in 0..m - 1 {
            for (a, b) in [(l, l + 1), (l + 1, l)] {
                if let Some((q, sign)) = hop(&basis, p, a, b) {
                    let row = basis.index_of(q).expect("hopping conserves particle number");
                    h[[row, col]] += -params.hopping * sign;
                }
            }
        }
    }
    let hamiltonian = ComplexOperator::hermitian(h.mapv(|x| C64::new(x, 0.0)))?;

    // (c_l^† + c_{l+1}^†)(c_l - c_{l+1}) expanded into number and hopping terms.
    let jumps = (0..m - 1)
        .map(|l| {
            let terms = [(l, l, 1.0), (l, l + 1, -1.0), (l + 1, l, 1.0), (l + 1, l + 1, -1.0)];
            Ok(JumpOperator {
                operator: quadratic_operator(&basis, &terms)?,
                rate: params.gamma,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    LindbladModel::new(
        hamiltonian,
        jumps,
        basis,
        format!(
            "mbl(M={m},W={},J={},U={},gamma={},seed={})",
            params.disorder_strength, params.hopping, params.interaction, params.gamma, disorder.seed
        ),
    )
}

/// Alternating pattern `1010...` starting with site 0 occupied.
pub fn neel_pattern(basis: &BasisDescriptor) -> u64 {
    (0..basis.sites())
        .step_by(2)
        .fold(0, |p, l| p | basis.site_bit(l))
}

pub fn neel_state(basis: &BasisDescriptor) -> Result<PureState> {
    let pattern = neel_pattern(basis);
    let index = basis.index_of(pattern).ok_or_else(|| {
        Error::invalid(
            "basis",
            format!(
                "alternating pattern {} is not in the basis",
                basis.format_pattern(pattern)
            ),
        )
    })?;
    PureState::basis(basis.dim(), index)
}

/// Real symmetric `(G + G^T) / 2` with i.i.d. standard normal `G`.
pub fn sample_goe_observable(dim: usize, seed: u64) -> ComplexOperator {
    let mut s = rng::stream(seed);
    let g: Array2<f64> = Array2::from_shape_simple_fn((dim, dim), || s.sample(StandardNormal));
    let mut a = Array2::<C64>::zeros((dim, dim));
    for i in 0..dim {
        for j in i..dim {
            let v = C64::new(0.5 * (g[[i, j]] + g[[j, i]]), 0.0);
            a[[i, j]] = v;
            a[[j, i]] = v;
        }
    }
    ComplexOperator::hermitian(a).expect("symmetric by construction")
}
