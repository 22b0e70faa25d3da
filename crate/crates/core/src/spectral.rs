//! Spectral diagnostics of simulated states: pooled eigenvalue histograms,
//! moments, Cauchy transforms and Stieltjes inversion.

use std::f64::consts::{FRAC_PI_2, PI};
use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::{cauchy_transform_of_spectrum, check_upper_half_plane, HermitianMatrix};
use crate::quadrature::{integrate, integrate_complex};
use crate::scalar::Real;

pub const DEFAULT_BINS: usize = 20;
pub const DEFAULT_EPS: f64 = 0.05;

/// `{i, 1+i, 2i, −1+i}`.
pub fn default_probes() -> Vec<Complex64> {
    vec![
        Complex64::new(0.0, 1.0),
        Complex64::new(1.0, 1.0),
        Complex64::new(0.0, 2.0),
        Complex64::new(-1.0, 1.0),
    ]
}

/// Bin edges and probability densities; `Σ densityᵢ·widthᵢ = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub densities: Vec<f64>,
}

impl Histogram {
    /// `bins` equal-width bins over `[lo, hi]`. Values outside the range are
    /// dropped; the rest are normalized to a probability density. A
    /// degenerate range is widened by 0.5 on each side.
    pub fn new(values: &[f64], bins: usize, lo: f64, hi: f64) -> Result<Self> {
        if bins == 0 {
            return Err(Error::InvalidArgument("bins must be positive".into()));
        }
        if !(lo.is_finite() && hi.is_finite()) || lo > hi {
            return Err(Error::InvalidArgument(format!("invalid histogram range [{lo}, {hi}]")));
        }
        let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, hi + 0.5) };
        let width = (hi - lo) / bins as f64;
        let mut counts = vec![0usize; bins];
        let mut total = 0usize;
        for &x in values {
            if x < lo || x > hi {
                continue;
            }
            let k = (((x - lo) / width) as usize).min(bins - 1);
            counts[k] += 1;
            total += 1;
        }
        if total == 0 {
            return Err(Error::InvalidArgument(format!("no values fall inside [{lo}, {hi}]")));
        }
        let edges = (0..=bins)
            .map(|k| if k == bins { hi } else { lo + width * k as f64 })
            .collect::<Vec<_>>();
        let densities = counts
            .iter()
            .zip(edges.windows(2))
            .map(|(&c, e)| c as f64 / (total as f64 * (e[1] - e[0])))
            .collect();
        Ok(Self { edges, densities })
    }

    pub fn bins(&self) -> usize {
        self.densities.len()
    }

    /// `Σ densityᵢ·widthᵢ`.
    pub fn mass(&self) -> f64 {
        self.densities
            .iter()
            .zip(self.edges.windows(2))
            .map(|(d, e)| d * (e[1] - e[0]))
            .sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralSummary {
    /// Pooled over the ensemble, ascending.
    pub eigenvalues: Vec<f64>,
    pub histogram: Histogram,
    /// `φ(Xᵏ)` for `k = 1..=4`, stored at index `k − 1`.
    pub moments: [f64; 4],
    /// `(min eigenvalue, max eigenvalue)`.
    pub support_estimate: (f64, f64),
}

impl SpectralSummary {
    /// Summary of an already pooled spectrum. `range` overrides the data
    /// min/max used for the histogram.
    pub fn from_eigenvalues(mut eigenvalues: Vec<f64>, bins: usize, range: Option<(f64, f64)>) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::EmptyEnsemble);
        }
        if eigenvalues.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        eigenvalues.sort_by(f64::total_cmp);
        let support_estimate = (eigenvalues[0], eigenvalues[eigenvalues.len() - 1]);
        let (lo, hi) = range.unwrap_or(support_estimate);
        let histogram = Histogram::new(&eigenvalues, bins, lo, hi)?;
        let count = eigenvalues.len() as f64;
        let mut moments = [0.0; 4];
        for (k, m) in moments.iter_mut().enumerate() {
            *m = eigenvalues.iter().map(|x| x.powi(k as i32 + 1)).sum::<f64>() / count;
        }
        Ok(Self {
            eigenvalues,
            histogram,
            moments,
            support_estimate,
        })
    }

    /// `φ(Xᵏ)` for `k ∈ 1..=4`.
    pub fn moment(&self, k: usize) -> f64 {
        assert!((1..=4).contains(&k), "moments are kept for k = 1..=4");
        self.moments[k - 1]
    }
}

/// All eigenvalues of the ensemble, ascending.
pub fn pooled_eigenvalues<T: Real>(states: &[HermitianMatrix<T>]) -> Result<Vec<f64>> {
    let first = states.first().ok_or(Error::EmptyEnsemble)?;
    let n = first.n();
    if let Some(bad) = states.iter().find(|s| s.n() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: bad.n(),
        });
    }
    let spectra = states
        .par_iter()
        .map(|s| s.eigenvalues())
        .collect::<Result<Vec<_>>>()?;
    let mut pooled: Vec<f64> = spectra.into_iter().flatten().map(|x| x.to_f64_lossy()).collect();
    pooled.sort_by(f64::total_cmp);
    Ok(pooled)
}

pub fn summarize<T: Real>(states: &[HermitianMatrix<T>], bins: usize) -> Result<SpectralSummary> {
    summarize_in_range(states, bins, None)
}

pub fn summarize_in_range<T: Real>(
    states: &[HermitianMatrix<T>],
    bins: usize,
    range: Option<(f64, f64)>,
) -> Result<SpectralSummary> {
    SpectralSummary::from_eigenvalues(pooled_eigenvalues(states)?, bins, range)
}

/// `(2/(πR²))√(R² − x²)` on `[−R, R]`, zero outside.
pub fn semicircle_density(radius: f64, x: f64) -> Result<f64> {
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::InvalidArgument(format!("semicircle radius must be positive, got {radius}")));
    }
    let r2 = radius * radius;
    let inside = r2 - x * x;
    Ok(if inside > 0.0 { 2.0 / (PI * r2) * inside.sqrt() } else { 0.0 })
}

/// `∫ ρ_R(x)/(x − z) dx` for the centred semicircle, by quadrature in
/// `x = R sin ϑ`.
pub fn semicircle_cauchy_transform(radius: f64, z: Complex64) -> Result<Complex64> {
    semicircle_density(radius, 0.0)?;
    check_upper_half_plane(z)?;
    let kernel = |theta: f64| {
        let c = theta.cos();
        Complex64::new(2.0 / PI * c * c, 0.0) / (Complex64::new(radius * theta.sin(), 0.0) - z)
    };
    Ok(integrate_complex(kernel, -FRAC_PI_2, FRAC_PI_2, 1e-12))
}

/// Mass of the semicircle density on `[−R, R]` by adaptive quadrature.
pub fn semicircle_mass(radius: f64) -> Result<f64> {
    semicircle_density(radius, 0.0)?;
    Ok(integrate(|x| semicircle_density(radius, x).unwrap_or(0.0), -radius, radius, 1e-12))
}

/// A recovered density on an ascending grid.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityCurve {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
}

impl DensityCurve {
    /// Trapezoidal integral over the grid.
    pub fn integral(&self) -> f64 {
        self.grid
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
            .sum()
    }

    /// `max_j |values[j] − f(grid[j])|` over grid points with `keep(x)`.
    pub fn sup_distance(&self, f: impl Fn(f64) -> f64, keep: impl Fn(f64) -> bool) -> f64 {
        self.grid
            .iter()
            .zip(&self.values)
            .filter(|(x, _)| keep(**x))
            .map(|(x, v)| (v - f(*x)).abs())
            .fold(0.0, f64::max)
    }
}

/// `k + 1` equally spaced points from `lo` to `hi`.
pub fn uniform_grid(lo: f64, hi: f64, intervals: usize) -> Vec<f64> {
    let h = (hi - lo) / intervals as f64;
    (0..=intervals)
        .map(|k| if k == intervals { hi } else { lo + h * k as f64 })
        .collect()
}

/// `ρ(x) ≈ max(Im G(x + iε)/π, 0)` on `grid`.
pub fn stieltjes_invert<G: Fn(Complex64) -> Complex64>(g: G, grid: &[f64], eps: f64) -> Result<DensityCurve> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidArgument("grid must be strictly ascending".into()));
    }
    let values = grid
        .iter()
        .map(|&x| (g(Complex64::new(x, eps)).im / PI).max(0.0))
        .collect();
    Ok(DensityCurve {
        grid: grid.to_vec(),
        values,
    })
}

/// Ensemble-averaged Cauchy transform of a pooled spectrum.
pub fn ensemble_cauchy_transform(pooled: &[f64], z: Complex64) -> Result<Complex64> {
    if pooled.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    check_upper_half_plane(z)?;
    Ok(cauchy_transform_of_spectrum(pooled, z))
}

/// `max_z |Ĝ(z) − G_ref(z)|` over the probes, with `Ĝ` given by a pooled
/// spectrum.
pub fn transform_distance_of_spectrum<G: Fn(Complex64) -> Complex64>(
    pooled: &[f64],
    reference: G,
    probes: &[Complex64],
) -> Result<f64> {
    let mut worst = 0.0f64;
    for &z in probes {
        let d = (ensemble_cauchy_transform(pooled, z)? - reference(z)).norm();
        worst = worst.max(d);
    }
    Ok(worst)
}

pub fn transform_distance<T: Real, G: Fn(Complex64) -> Complex64>(
    ensemble: &[HermitianMatrix<T>],
    reference: G,
    probes: &[Complex64],
) -> Result<f64> {
    for &z in probes {
        check_upper_half_plane(z)?;
    }
    transform_distance_of_spectrum(&pooled_eigenvalues(ensemble)?, reference, probes)
}

fn write_header<W: Write>(w: &mut W, header: &[String], columns: &str) -> Result<()> {
    for line in header {
        writeln!(w, "{line}")?;
    }
    writeln!(w, "{columns}")?;
    Ok(())
}

pub fn write_histogram_csv<W: Write>(mut w: W, header: &[String], h: &Histogram) -> Result<()> {
    write_header(&mut w, header, "bin_left,bin_right,density")?;
    for (e, d) in h.edges.windows(2).zip(&h.densities) {
        writeln!(w, "{},{},{}", e[0], e[1], d)?;
    }
    w.flush()?;
    Ok(())
}

/// Moments and support estimate as `statistic,value` rows.
pub fn write_moments_csv<W: Write>(mut w: W, header: &[String], s: &SpectralSummary) -> Result<()> {
    write_header(&mut w, header, "statistic,value")?;
    for (k, m) in s.moments.iter().enumerate() {
        writeln!(w, "m{},{}", k + 1, m)?;
    }
    writeln!(w, "support_min,{}", s.support_estimate.0)?;
    writeln!(w, "support_max,{}", s.support_estimate.1)?;
    writeln!(w, "eigenvalues,{}", s.eigenvalues.len())?;
    w.flush()?;
    Ok(())
}

pub fn write_density_csv<W: Write>(mut w: W, header: &[String], c: &DensityCurve) -> Result<()> {
    write_header(&mut w, header, "x,rho")?;
    for (x, r) in c.grid.iter().zip(&c.values) {
        writeln!(w, "{x},{r}")?;
    }
    w.flush()?;
    Ok(())
}

/// `(z, G(z))` pairs.
pub fn write_probes_csv<W: Write>(mut w: W, header: &[String], rows: &[(Complex64, Complex64)]) -> Result<()> {
    write_header(&mut w, header, "re_z,im_z,re_g,im_g")?;
    for (z, g) in rows {
        writeln!(w, "{},{},{},{}", z.re, z.im, g.re, g.im)?;
    }
    w.flush()?;
    Ok(())
}
