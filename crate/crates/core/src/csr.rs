//! Complex spacing ratios.
//!
//! For every eigenvalue `λ_k` with nearest neighbor `λ^NN` and next-nearest
//! neighbor `λ^NNN`, `z_k = (λ^NN − λ_k) / (λ^NNN − λ_k)` lies in the unit disc.

use std::f64::consts::PI;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg::eigenvalues;
use crate::liouville::Spectrum;
use crate::rng;
use crate::{Error, Result, C64};

/// Relative floor under which an NNN distance counts as degenerate.
pub const DEGENERACY_FLOOR: f64 = 1e-12;

/// Below this size neighbor search is done by brute force.
const SWEEP_MIN_POINTS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NeighborTriple {
    pub index: usize,
    pub nn: usize,
    pub nnn: usize,
}

#[inline]
fn dist_sq(a: C64, b: C64) -> f64 {
    let dr = a.re - b.re;
    let di = a.im - b.im;
    dr * dr + di * di
}

/// Keeps the two smallest `(d², index)` pairs seen, ordered lexicographically.
#[derive(Clone, Copy)]
struct BestTwo {
    first: (f64, usize),
    second: (f64, usize),
}

impl BestTwo {
    fn new() -> Self {
        Self {
            first: (f64::INFINITY, usize::MAX),
            second: (f64::INFINITY, usize::MAX),
        }
    }

    #[inline]
    fn offer(&mut self, cand: (f64, usize)) {
        if lex_lt(cand, self.first) {
            self.second = self.first;
            self.first = cand;
        } else if lex_lt(cand, self.second) {
            self.second = cand;
        }
    }
}

#[inline]
fn lex_lt(a: (f64, usize), b: (f64, usize)) -> bool {
    a.0 < b.0 || (a.0 == b.0 && a.1 < b.1)
}

fn check_points(points: &[C64]) -> Result<()> {
    if points.len() < 3 {
        return Err(Error::invalid(
            "spectrum",
            format!("need at least 3 eigenvalues, got {}", points.len()),
        ));
    }
    if points.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite("eigenvalues"));
    }
    Ok(())
}

/// O(n²) reference search. Ties in distance go to the smaller index.
pub fn neighbor_triples_brute(points: &[C64]) -> Result<Vec<NeighborTriple>> {
    check_points(points)?;
    Ok((0..points.len())
        .map(|k| {
            let mut best = BestTwo::new();
            for (j, &p) in points.iter().enumerate() {
                if j != k {
                    best.offer((dist_sq(points[k], p), j));
                }
            }
            NeighborTriple {
                index: k,
                nn: best.first.1,
                nnn: best.second.1,
            }
        })
        .collect())
}

/// Sweep over points sorted by real part, stopping once the real-part gap
/// alone exceeds the current second-best distance. Same result as
/// [`neighbor_triples_brute`].
pub fn neighbor_triples_sweep(points: &[C64]) -> Result<Vec<NeighborTriple>> {
    check_points(points)?;
    let n = points.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| points[a].re.total_cmp(&points[b].re).then(a.cmp(&b)));
    let mut out: Vec<NeighborTriple> = (0..n)
        .into_par_iter()
        .map(|pos| {
            let k = order[pos];
            let pk = points[k];
            let mut best = BestTwo::new();
            let mut lo = pos;
            let mut hi = pos + 1;
            let (mut go_lo, mut go_hi) = (pos > 0, hi < n);
            while go_lo || go_hi {
                if go_lo {
                    let j = order[lo - 1];
                    let gap = pk.re - points[j].re;
                    if gap * gap > best.second.0 {
                        go_lo = false;
                    } else {
                        best.offer((dist_sq(pk, points[j]), j));
                        lo -= 1;
                        go_lo = lo > 0;
                    }
                }
                if go_hi {
                    let j = order[hi];
                    let gap = points[j].re - pk.re;
                    if gap * gap > best.second.0 {
                        go_hi = false;
                    } else {
                        best.offer((dist_sq(pk, points[j]), j));
                        hi += 1;
                        go_hi = hi < n;
                    }
                }
            }
            NeighborTriple {
                index: k,
                nn: best.first.1,
                nnn: best.second.1,
            }
        })
        .collect();
    out.sort_by_key(|t| t.index);
    Ok(out)
}

pub fn neighbor_triples(spectrum: &Spectrum) -> Result<Vec<NeighborTriple>> {
    if spectrum.len() < SWEEP_MIN_POINTS {
        neighbor_triples_brute(&spectrum.eigenvalues)
    } else {
        neighbor_triples_sweep(&spectrum.eigenvalues)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CsrSample {
    pub z: C64,
    pub source_index: usize,
    pub nn_distance: f64,
    pub nnn_distance: f64,
    pub degenerate: bool,
}

/// Largest pairwise distance.
pub fn diameter(points: &[C64]) -> f64 {
    let mut best = 0.0f64;
    for (i, &a) in points.iter().enumerate() {
        for &b in &points[i + 1..] {
            best = best.max(dist_sq(a, b));
        }
    }
    best.sqrt()
}

/// Spacing ratios of one spectrum. Samples whose NNN distance is below
/// `1e-12 · diameter` are flagged degenerate; if every sample is, the
/// spectrum is rejected.
pub fn csr_values(spectrum: &Spectrum) -> Result<Vec<CsrSample>> {
    let pts = &spectrum.eigenvalues;
    let triples = neighbor_triples(spectrum)?;
    let floor = DEGENERACY_FLOOR * diameter(pts);
    let samples: Vec<CsrSample> = triples
        .iter()
        .map(|t| {
            let l = pts[t.index];
            let nn_distance = dist_sq(l, pts[t.nn]).sqrt();
            let nnn_distance = dist_sq(l, pts[t.nnn]).sqrt();
            let degenerate = !(nnn_distance >= floor && nnn_distance > 0.0);
            let z = if nnn_distance > 0.0 {
                (pts[t.nn] - l) / (pts[t.nnn] - l)
            } else {
                C64::new(f64::NAN, f64::NAN)
            };
            CsrSample {
                z,
                source_index: t.index,
                nn_distance,
                nnn_distance,
                degenerate,
            }
        })
        .collect();
    let bad = samples.iter().filter(|s| s.degenerate).count();
    if bad == samples.len() {
        return Err(Error::DegenerateSpectrum(bad));
    }
    Ok(samples)
}

/// Non-degenerate `z` values.
pub fn usable(samples: &[CsrSample]) -> Vec<C64> {
    samples.iter().filter(|s| !s.degenerate).map(|s| s.z).collect()
}

/// Pools the samples of several spectra, computed per spectrum in parallel.
/// Spectra that are entirely degenerate contribute only to the returned count.
pub fn pooled_csr(spectra: &[Spectrum]) -> Result<(Vec<CsrSample>, usize)> {
    let per: Vec<Result<Vec<CsrSample>>> = spectra.par_iter().map(csr_values).collect();
    let mut pooled = Vec::new();
    let mut degenerate = 0;
    for r in per {
        match r {
            Ok(s) => {
                degenerate += s.iter().filter(|x| x.degenerate).count();
                pooled.extend(s);
            }
            Err(Error::DegenerateSpectrum(n)) => degenerate += n,
            Err(e) => return Err(e),
        }
    }
    Ok((pooled, degenerate))
}

/// `B × B` density on `[-1, 1]²`, row index along `Re z`.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrHistogram {
    pub bins: usize,
    pub counts: Array2<u64>,
    pub total: u64,
}

fn bin_of(x: f64, lo: f64, hi: f64, bins: usize) -> Option<usize> {
    if !(x >= lo && x <= hi) {
        return None;
    }
    let b = ((x - lo) / (hi - lo) * bins as f64) as usize;
    Some(b.min(bins - 1))
}

impl CsrHistogram {
    pub fn cell_width(&self) -> f64 {
        2.0 / self.bins as f64
    }

    pub fn edge(&self, i: usize) -> f64 {
        -1.0 + i as f64 * self.cell_width()
    }

    pub fn density(&self) -> Array2<f64> {
        let area = self.cell_width() * self.cell_width();
        let total = self.total.max(1) as f64;
        self.counts.mapv(|c| c as f64 / (total * area))
    }

    /// Sum of counts of two histograms over the same grid.
    pub fn merge(&self, other: &Self) -> Result<Self> {
        if self.bins != other.bins {
            return Err(Error::DimensionMismatch(format!("{} vs {} bins", self.bins, other.bins)));
        }
        Ok(Self {
            bins: self.bins,
            counts: &self.counts + &other.counts,
            total: self.total + other.total,
        })
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv_writer(path)?;
        w.write_record(["re_left", "re_right", "im_left", "im_right", "density"])?;
        let d = self.density();
        for i in 0..self.bins {
            for j in 0..self.bins {
                w.write_record([
                    self.edge(i).to_string(),
                    self.edge(i + 1).to_string(),
                    self.edge(j).to_string(),
                    self.edge(j + 1).to_string(),
                    d[[i, j]].to_string(),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

pub fn csr_histogram(samples: &[CsrSample], bins: usize) -> Result<CsrHistogram> {
    if bins < 2 {
        return Err(Error::invalid("bins", format!("need at least 2, got {bins}")));
    }
    let mut counts = Array2::<u64>::zeros((bins, bins));
    let mut total = 0;
    for z in usable(samples) {
        if let (Some(i), Some(j)) = (bin_of(z.re, -1.0, 1.0, bins), bin_of(z.im, -1.0, 1.0, bins)) {
            counts[[i, j]] += 1;
            total += 1;
        }
    }
    if total == 0 {
        return Err(Error::Empty("csr samples"));
    }
    Ok(CsrHistogram { bins, counts, total })
}

/// One-dimensional density on equal bins over `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Density1D {
    pub lo: f64,
    pub hi: f64,
    pub density: Vec<f64>,
    pub counts: Vec<u64>,
    pub total: u64,
}

impl Density1D {
    fn from_values(values: impl Iterator<Item = f64>, lo: f64, hi: f64, bins: usize) -> Result<Self> {
        if bins == 0 {
            return Err(Error::invalid("bins", "need at least 1"));
        }
        let mut counts = vec![0u64; bins];
        for x in values {
            if let Some(b) = bin_of(x, lo, hi, bins) {
                counts[b] += 1;
            }
        }
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(Error::Empty("binned values"));
        }
        let width = (hi - lo) / bins as f64;
        let density = counts.iter().map(|&c| c as f64 / (total as f64 * width)).collect();
        Ok(Self {
            lo,
            hi,
            density,
            counts,
            total,
        })
    }

    pub fn bins(&self) -> usize {
        self.density.len()
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.bins() as f64
    }

    pub fn left(&self, i: usize) -> f64 {
        self.lo + i as f64 * self.width()
    }

    pub fn center(&self, i: usize) -> f64 {
        self.left(i) + 0.5 * self.width()
    }

    pub fn integral(&self) -> f64 {
        self.density.iter().sum::<f64>() * self.width()
    }

    /// Mean density over bins whose centers lie in `[a, b]`, with its
    /// Poisson counting error.
    pub fn window_mean(&self, a: f64, b: f64) -> (f64, f64) {
        let idx: Vec<usize> = (0..self.bins()).filter(|&i| (a..=b).contains(&self.center(i))).collect();
        let c: u64 = idx.iter().map(|&i| self.counts[i]).sum();
        let norm = self.total as f64 * self.width() * idx.len() as f64;
        (c as f64 / norm, (c as f64).sqrt() / norm)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv_writer(path)?;
        w.write_record(["bin_left", "bin_right", "density"])?;
        for (i, d) in self.density.iter().enumerate() {
            w.write_record([self.left(i).to_string(), self.left(i + 1).to_string(), d.to_string()])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Density of `r = |z|` on `[0, 1]`.
pub fn radial_marginal(samples: &[CsrSample], bins: usize) -> Result<Density1D> {
    Density1D::from_values(usable(samples).into_iter().map(|z| z.norm().min(1.0)), 0.0, 1.0, bins)
}

/// Density of `θ = arg z` on `[-π, π]`.
pub fn angular_marginal(samples: &[CsrSample], bins: usize) -> Result<Density1D> {
    Density1D::from_values(usable(samples).into_iter().map(|z| z.arg()), -PI, PI, bins)
}

/// Density of `Re z` over samples with `|Im z| ≤ halfwidth`.
pub fn real_axis_section(samples: &[CsrSample], halfwidth: f64, bins: usize) -> Result<Density1D> {
    if !(halfwidth > 0.0) {
        return Err(Error::invalid("halfwidth", format!("must be positive, got {halfwidth}")));
    }
    let vals: Vec<f64> = usable(samples)
        .into_iter()
        .filter(|z| z.im.abs() <= halfwidth)
        .map(|z| z.re)
        .collect();
    if vals.is_empty() {
        return Err(Error::Empty("real-axis stripe"));
    }
    Density1D::from_values(vals.into_iter(), -1.0, 1.0, bins)
}

/// Section density the uniform disc would give at `Re z = x`.
pub fn uniform_section_density(x: f64, halfwidth: f64) -> f64 {
    let chord = |x: f64| halfwidth.min((1.0 - x * x).max(0.0).sqrt());
    let hw = halfwidth.min(1.0);
    let x0 = (1.0 - hw * hw).sqrt();
    let area = 2.0 * hw * x0 + PI - 2.0 * x0.asin();
    2.0 * chord(x) / area
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CsrSummary {
    pub n_samples: usize,
    pub n_degenerate: usize,
    pub mean_r: f64,
    pub mean_cos_theta: f64,
}

impl CsrSummary {
    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer_pretty(BufWriter::new(f), self)?;
        Ok(())
    }
}

/// `⟨|z|⟩` and `⟨cos arg z⟩` over non-degenerate samples.
pub fn summary_stats(samples: &[CsrSample]) -> Result<CsrSummary> {
    let zs = usable(samples);
    if zs.is_empty() {
        return Err(Error::Empty("csr samples"));
    }
    let n = zs.len() as f64;
    let mean_r = zs.iter().map(|z| z.norm()).sum::<f64>() / n;
    let mean_cos_theta = zs
        .iter()
        .map(|z| if z.norm() > 0.0 { z.re / z.norm() } else { 1.0 })
        .sum::<f64>()
        / n;
    Ok(CsrSummary {
        n_samples: zs.len(),
        n_degenerate: samples.len() - zs.len(),
        mean_r,
        mean_cos_theta,
    })
}

/// Fraction of non-degenerate samples with `|z − center| < radius`.
pub fn disk_mass(samples: &[CsrSample], center: C64, radius: f64) -> f64 {
    let zs = usable(samples);
    if zs.is_empty() {
        return f64::NAN;
    }
    zs.iter().filter(|z| (*z - center).norm() < radius).count() as f64 / zs.len() as f64
}

/// Mass a flat unit-disc density puts in `|z − center| < radius`.
pub fn uniform_disk_share(center: C64, radius: f64) -> f64 {
    let d = center.norm();
    let (r, big) = (radius, 1.0f64);
    let area = if d + r <= big {
        PI * r * r
    } else if d >= r + big {
        0.0
    } else if d + big <= r {
        PI
    } else {
        let a1 = r * r * ((d * d + r * r - big * big) / (2.0 * d * r)).clamp(-1.0, 1.0).acos();
        let a2 = big * big * ((d * d + big * big - r * r) / (2.0 * d * big)).clamp(-1.0, 1.0).acos();
        let k = ((-d + r + big) * (d + r - big) * (d - r + big) * (d + r + big)).max(0.0).sqrt();
        a1 + a2 - 0.5 * k
    };
    area / PI
}

/// Eigenvalues of an `n × n` matrix with i.i.d. complex Gaussian entries,
/// real and imaginary parts each `N(0, 1) / √(2n)`.
pub fn sample_ginue(n: usize, seed: u64) -> Result<Spectrum> {
    if n < 3 {
        return Err(Error::invalid("n", format!("need at least 3, got {n}")));
    }
    let mut s = rng::stream(seed);
    let scale = 1.0 / (2.0 * n as f64).sqrt();
    let m = Array2::from_shape_simple_fn((n, n), || {
        let re: f64 = s.sample(StandardNormal);
        let im: f64 = s.sample(StandardNormal);
        C64::new(re * scale, im * scale)
    });
    let eigenvalues = eigenvalues(&m);
    if eigenvalues.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Eigensolver {
            label: format!("ginue(n={n},seed={seed})"),
            reason: "non-finite eigenvalue".into(),
        });
    }
    Ok(Spectrum::new(eigenvalues, format!("ginue(n={n},seed={seed})"), 0))
}

/// `n` i.i.d. points uniform on the unit square.
pub fn sample_poisson_points(n: usize, seed: u64) -> Result<Spectrum> {
    if n < 3 {
        return Err(Error::invalid("n", format!("need at least 3, got {n}")));
    }
    let mut s = rng::stream(seed);
    let pts = (0..n).map(|_| C64::new(s.gen::<f64>(), s.gen::<f64>())).collect();
    Ok(Spectrum::new(pts, format!("poisson(n={n},seed={seed})"), 0))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(BufWriter::new(f)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(points: &[(f64, f64)]) -> Spectrum {
        Spectrum::new(points.iter().map(|&(a, b)| C64::new(a, b)).collect(), "t", 0)
    }

    #[test]
    fn three_point_example() {
        let s = spec(&[(0.0, 0.0), (1.0, 0.0), (3.0, 0.0)]);
        let t = neighbor_triples(&s).unwrap();
        assert_eq!(t[0], NeighborTriple { index: 0, nn: 1, nnn: 2 });
        let z = csr_values(&s).unwrap();
        assert_eq!(z[0].z, C64::new(1.0 / 3.0, 0.0));
        let st = summary_stats(&z[..1]).unwrap();
        assert!((st.mean_r - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(st.mean_cos_theta, 1.0);
    }

    #[test]
    fn too_few_points() {
        assert!(neighbor_triples(&spec(&[(0.0, 0.0), (1.0, 0.0)])).is_err());
    }

    #[test]
    fn duplicate_is_nearest() {
        let s = spec(&[(0.0, 0.0), (2.0, 0.0), (0.0, 0.0), (5.0, 1.0)]);
        let t = neighbor_triples(&s).unwrap();
        assert_eq!(t[0].nn, 2);
        assert_eq!(t[2].nn, 0);
        let z = csr_values(&s).unwrap();
        assert_eq!(z[0].nn_distance, 0.0);
        assert_eq!(z[0].z, C64::new(0.0, 0.0));
    }

    #[test]
    fn ties_go_to_smaller_index() {
        let s = spec(&[(0.0, 0.0), (1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0)]);
        let t = neighbor_triples_brute(&s.eigenvalues).unwrap();
        assert_eq!((t[0].nn, t[0].nnn), (1, 2));
        assert_eq!(neighbor_triples_sweep(&s.eigenvalues).unwrap(), t);
    }

    #[test]
    fn fully_degenerate_spectrum_is_rejected() {
        let s = spec(&[(1.0, 0.0), (1.0, 0.0), (1.0, 0.0), (1.0, 0.0)]);
        assert!(matches!(csr_values(&s), Err(Error::DegenerateSpectrum(4))));
    }

    #[test]
    fn sweep_matches_brute_force() {
        let mut s = rng::stream(4);
        let pts: Vec<C64> = (0..1000).map(|_| C64::new(s.gen::<f64>(), s.gen::<f64>())).collect();
        assert_eq!(neighbor_triples_sweep(&pts).unwrap(), neighbor_triples_brute(&pts).unwrap());
        // Heavy ties: a coarse integer lattice with repeats.
        let grid: Vec<C64> = (0..600).map(|_| C64::new(s.gen_range(0..8) as f64, s.gen_range(0..8) as f64)).collect();
        assert_eq!(neighbor_triples_sweep(&grid).unwrap(), neighbor_triples_brute(&grid).unwrap());
    }

    #[test]
    fn single_sample_histogram() {
        let s = spec(&[(0.0, 0.0), (1.0, 0.0), (3.0, 0.0)]);
        let z = csr_values(&s).unwrap();
        let h = csr_histogram(&z[..1], 10).unwrap();
        assert_eq!(h.counts.iter().filter(|&&c| c > 0).count(), 1);
        let mass: f64 = h.density().sum() * h.cell_width().powi(2);
        assert!((mass - 1.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_disk_shares() {
        assert!((uniform_disk_share(C64::new(0.0, 0.0), 0.25) - 0.0625).abs() < 1e-15);
        assert!((uniform_disk_share(C64::new(0.0, 0.0), 2.0) - 1.0).abs() < 1e-15);
        // Lens of two unit circles at distance 1: 2π/3 − √3/2.
        let lens = (2.0 * PI / 3.0 - 3f64.sqrt() / 2.0) / PI;
        assert!((uniform_disk_share(C64::new(1.0, 0.0), 1.0) - lens).abs() < 1e-12);
        // Monte-Carlo check of the z = 1 depletion disk.
        let mut s = rng::stream(2);
        let (mut inside, mut total) = (0u64, 0u64);
        while total < 400_000 {
            let z = C64::new(s.gen_range(-1.0..1.0), s.gen_range(-1.0..1.0));
            if z.norm() <= 1.0 {
                total += 1;
                if (z - 1.0).norm() < 0.25 {
                    inside += 1;
                }
            }
        }
        let mc = inside as f64 / total as f64;
        assert!((mc - uniform_disk_share(C64::new(1.0, 0.0), 0.25)).abs() < 0.002);
    }

    #[test]
    fn uniform_section_integrates_to_one() {
        for hw in [0.05, 0.5, 1.0] {
            let n = 200_000;
            let h = 2.0 / n as f64;
            let total: f64 = (0..n).map(|i| uniform_section_density(-1.0 + (i as f64 + 0.5) * h, hw) * h).sum();
            assert!((total - 1.0).abs() < 1e-6, "{hw}: {total}");
        }
    }

    #[test]
    fn reference_samplers_are_deterministic() {
        assert_eq!(sample_ginue(20, 3).unwrap(), sample_ginue(20, 3).unwrap());
        assert_eq!(sample_poisson_points(20, 3).unwrap(), sample_poisson_points(20, 3).unwrap());
        assert_ne!(sample_poisson_points(20, 3).unwrap(), sample_poisson_points(20, 4).unwrap());
    }
}
