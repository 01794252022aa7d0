//! Densities on a uniform grid, Gaussian kernel density estimation and the
//! Hellinger distance between gridded densities.
//!
//! All integrals use the trapezoid rule on the grid. Every constructed
//! [`GriddedPdf`] is renormalized to unit mass on its grid so that tail mass
//! falling outside the grid does not bias distances.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::distributions::TrueDistribution;
use crate::error::{Error, Result};
use crate::fmt_num;

pub const MIN_GRID_POINTS: usize = 64;

/// Kernels contribute nothing measurable beyond this many bandwidths.
const KERNEL_CUTOFF: f64 = 9.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub min: f64,
    pub max: f64,
    pub n_points: usize,
}

impl Default for Grid {
    fn default() -> Self {
        Self {
            min: -10.0,
            max: 10.0,
            n_points: 1024,
        }
    }
}

impl Grid {
    pub fn new(min: f64, max: f64, n_points: usize) -> Result<Self> {
        let g = Self { min, max, n_points };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.min.is_finite() && self.max.is_finite() && self.min < self.max) {
            return Err(Error::config(
                "grid",
                format!("requires min < max, got [{}, {}]", self.min, self.max),
            ));
        }
        if self.n_points < MIN_GRID_POINTS {
            return Err(Error::config(
                "grid.n_points",
                format!("must be >= {MIN_GRID_POINTS}, got {}", self.n_points),
            ));
        }
        Ok(())
    }

    pub fn step(&self) -> f64 {
        (self.max - self.min) / (self.n_points - 1) as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        self.min + i as f64 * self.step()
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        let step = self.step();
        (0..self.n_points).map(move |i| self.min + i as f64 * step)
    }

    /// Trapezoid integral of `values` sampled on this grid.
    pub fn integrate(&self, values: impl IntoIterator<Item = f64>) -> f64 {
        let last = self.n_points - 1;
        let sum: f64 = values
            .into_iter()
            .enumerate()
            .map(|(i, v)| if i == 0 || i == last { 0.5 * v } else { v })
            .sum();
        sum * self.step()
    }
}

/// A probability density tabulated on a uniform [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GriddedPdf {
    grid: Grid,
    densities: Vec<f64>,
}

impl GriddedPdf {
    /// Wraps raw non-negative values and renormalizes them to unit mass.
    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self> {
        grid.validate()?;
        if values.len() != grid.n_points {
            return Err(Error::usage(format!(
                "expected {} density values, got {}",
                grid.n_points,
                values.len()
            )));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::usage("densities must be finite and non-negative"));
        }
        let mass = grid.integrate(values.iter().copied());
        if mass <= 0.0 {
            return Err(Error::usage("density has no mass on the grid"));
        }
        let densities = values.into_iter().map(|v| v / mass).collect();
        Ok(Self { grid, densities })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn densities(&self) -> &[f64] {
        &self.densities
    }

    pub fn integral(&self) -> f64 {
        self.grid.integrate(self.densities.iter().copied())
    }

    pub fn mean(&self) -> f64 {
        self.grid
            .integrate(self.grid.points().zip(&self.densities).map(|(x, p)| x * p))
            / self.integral()
    }

    /// Second central moment by quadrature.
    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        let var = self.grid.integrate(
            self.grid
                .points()
                .zip(&self.densities)
                .map(|(x, p)| (x - mean) * (x - mean) * p),
        ) / self.integral();
        var.max(0.0)
    }

    pub fn std(&self) -> f64 {
        self.variance().sqrt()
    }

    pub fn sqrt_densities(&self) -> Vec<f64> {
        self.densities.iter().map(|p| p.sqrt()).collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "density"])?;
        for (x, p) in self.grid.points().zip(&self.densities) {
            w.write_record([fmt_num(x), fmt_num(*p)])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule", content = "h")]
pub enum Bandwidth {
    /// `1.06 * min(std, IQR / 1.34) * n^(-1/5)`.
    Silverman,
    Fixed(f64),
}

/// Gaussian KDE settings. The kernel is always Gaussian.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KdeSpec {
    pub bandwidth: Bandwidth,
    pub grid: Grid,
}

impl Default for KdeSpec {
    fn default() -> Self {
        Self {
            bandwidth: Bandwidth::Silverman,
            grid: Grid::default(),
        }
    }
}

impl KdeSpec {
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if let Bandwidth::Fixed(h) = self.bandwidth {
            if !(h.is_finite() && h > 0.0) {
                return Err(Error::config(
                    "kde.bandwidth",
                    format!("must be > 0, got {h}"),
                ));
            }
        }
        Ok(())
    }
}

/// Linear-interpolated quantile of sorted data.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Silverman's rule of thumb over already sorted samples.
pub fn silverman_bandwidth(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    let std = if n > 1 {
        let mean = sorted.iter().sum::<f64>() / n as f64;
        let ss: f64 = sorted.iter().map(|x| (x - mean) * (x - mean)).sum();
        (ss / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    let iqr = (quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25)) / 1.34;
    let mut width = std.min(iqr);
    if width <= 0.0 {
        width = if std > 0.0 { std } else { 1.0 };
    }
    1.06 * width * (n as f64).powf(-0.2)
}

/// Bandwidth that [`fit_kde`] would use for these samples.
pub fn kde_bandwidth(samples: &[f64], spec: &KdeSpec) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::usage(
            "kernel density estimate needs at least one sample",
        ));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(bandwidth_for(&sorted, spec))
}

/// Rule bandwidth, floored at one grid step so a collapsed sample still
/// puts mass on grid points.
fn bandwidth_for(sorted: &[f64], spec: &KdeSpec) -> f64 {
    let h = match spec.bandwidth {
        Bandwidth::Fixed(h) => h,
        Bandwidth::Silverman => silverman_bandwidth(sorted),
    };
    h.max(spec.grid.step())
}

/// Gaussian KDE of `samples` evaluated on the spec's grid.
///
/// Samples are sorted before summation so the result is bitwise independent
/// of input order.
pub fn fit_kde(samples: &[f64], spec: &KdeSpec) -> Result<GriddedPdf> {
    if samples.is_empty() {
        return Err(Error::usage(
            "kernel density estimate needs at least one sample",
        ));
    }
    spec.validate()?;
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let h = bandwidth_for(&sorted, spec);

    let grid = spec.grid;
    let step = grid.step();
    let reach = KERNEL_CUTOFF * h;
    let inv_h = 1.0 / h;
    let last = grid.n_points - 1;
    let mut values = vec![0.0; grid.n_points];
    for &s in &sorted {
        let lo = ((s - reach - grid.min) / step).ceil().max(0.0);
        let hi = ((s + reach - grid.min) / step).floor().min(last as f64);
        if hi < lo {
            continue;
        }
        for (i, v) in values
            .iter_mut()
            .enumerate()
            .take(hi as usize + 1)
            .skip(lo as usize)
        {
            let z = (grid.min + i as f64 * step - s) * inv_h;
            *v += (-0.5 * z * z).exp();
        }
    }
    let norm = 1.0 / ((2.0 * PI).sqrt() * h * sorted.len() as f64);
    values.iter_mut().for_each(|v| *v *= norm);
    GriddedPdf::from_values(grid, values)
        .map_err(|_| Error::usage("samples lie entirely outside the density grid"))
}

/// Exact t density tabulated on `grid` and renormalized.
pub fn eval_grid(dist: &TrueDistribution, grid: &Grid) -> Result<GriddedPdf> {
    GriddedPdf::from_values(*grid, grid.points().map(|x| dist.pdf(x)).collect())
}

fn check_same_grid(p: &GriddedPdf, q: &GriddedPdf) -> Result<()> {
    if p.grid != q.grid {
        return Err(Error::usage(format!(
            "densities are on different grids: {:?} vs {:?}",
            p.grid, q.grid
        )));
    }
    Ok(())
}

/// `H(p, q) = sqrt(1/2 * ∫ (sqrt p - sqrt q)^2 dx)`, clamped to `[0, 1]`.
pub fn hellinger(p: &GriddedPdf, q: &GriddedPdf) -> Result<f64> {
    check_same_grid(p, q)?;
    Ok(hellinger_sqrt(
        &p.grid,
        &p.sqrt_densities(),
        &q.sqrt_densities(),
    ))
}

/// Hellinger distance from pre-computed square-root densities on `grid`.
pub fn hellinger_sqrt(grid: &Grid, sqrt_p: &[f64], sqrt_q: &[f64]) -> f64 {
    debug_assert_eq!(sqrt_p.len(), sqrt_q.len());
    let sq = grid.integrate(sqrt_p.iter().zip(sqrt_q).map(|(a, b)| (a - b) * (a - b)));
    (FRAC_1_SQRT_2 * sq.max(0.0).sqrt()).clamp(0.0, 1.0)
}

pub fn pdf_variance(p: &GriddedPdf) -> f64 {
    p.variance()
}
