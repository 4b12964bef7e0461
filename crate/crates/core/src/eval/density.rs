//! Gaussian kernel density estimates and KL divergence between them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::rates::check_scores;

pub const DEFAULT_GRID_POINTS: usize = 512;
/// Floor applied to the second density before taking logs.
pub const KL_EPSILON: f64 = 1e-12;

/// A density tabulated on an equispaced or arbitrary increasing grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityCurve {
    grid: Vec<f64>,
    density: Vec<f64>,
    bandwidth: f64,
}

fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1]))
        .sum()
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let step = (hi - lo) / (n - 1) as f64;
    (0..n)
        .map(|i| if i == n - 1 { hi } else { lo + step * i as f64 })
        .collect()
}

impl DensityCurve {
    /// Build a curve from nonnegative values, rescaling them to unit mass.
    pub fn new(grid: Vec<f64>, values: Vec<f64>, bandwidth: f64) -> Result<Self> {
        if grid.len() < 2 || grid.len() != values.len() {
            return Err(Error::invalid("density grid needs >= 2 points and one value per point"));
        }
        if grid.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(Error::invalid("density grid and values must be finite"));
        }
        if grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("density grid must be strictly increasing"));
        }
        if values.iter().any(|&v| v < 0.0) {
            return Err(Error::invalid("density values must be nonnegative"));
        }
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::invalid("bandwidth must be positive"));
        }
        let mass = trapezoid(&grid, &values);
        if mass <= 0.0 {
            return Err(Error::Degenerate("density has zero mass".into()));
        }
        let density = values.into_iter().map(|v| v / mass).collect();
        Ok(DensityCurve { grid, density, bandwidth })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn integral(&self) -> f64 {
        trapezoid(&self.grid, &self.density)
    }

    pub fn lo(&self) -> f64 {
        self.grid[0]
    }

    pub fn hi(&self) -> f64 {
        self.grid[self.grid.len() - 1]
    }

    /// Linear interpolation on the grid; zero outside it.
    pub fn value_at(&self, x: f64) -> f64 {
        if x < self.lo() || x > self.hi() {
            return 0.0;
        }
        let j = self.grid.partition_point(|&g| g <= x);
        if j == 0 {
            return self.density[0];
        }
        if j == self.grid.len() {
            return self.density[j - 1];
        }
        let (x0, x1) = (self.grid[j - 1], self.grid[j]);
        let (y0, y1) = (self.density[j - 1], self.density[j]);
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }
}

/// Silverman's rule of thumb `1.06 * sd * n^(-1/5)`.
pub fn silverman_bandwidth(samples: &[f64]) -> Result<f64> {
    check_scores(samples, "density")?;
    if samples.len() < 2 {
        return Err(Error::Degenerate("need at least two samples".into()));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    if sd == 0.0 {
        return Err(Error::Degenerate("samples have zero spread".into()));
    }
    Ok(1.06 * sd * libm::pow(n, -0.2))
}

/// Gaussian KDE tabulated on `grid_points` points over `[min - 3h, max + 3h]`.
pub fn kde(samples: &[f64], grid_points: usize) -> Result<DensityCurve> {
    if grid_points < 2 {
        return Err(Error::invalid("KDE grid needs at least two points"));
    }
    let h = silverman_bandwidth(samples)?;
    let (min, max) = samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &s| (lo.min(s), hi.max(s)));
    let grid = linspace(min - 3.0 * h, max + 3.0 * h, grid_points);
    let norm = 1.0 / (samples.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    let values = grid
        .iter()
        .map(|&x| {
            let sum: f64 = samples
                .iter()
                .map(|&s| {
                    let z = (x - s) / h;
                    libm::exp(-0.5 * z * z)
                })
                .sum();
            sum * norm
        })
        .collect();
    DensityCurve::new(grid, values, h)
}

/// `KL(p || q)` by the trapezoid rule on a shared grid.
///
/// Both curves are re-tabulated over the union of their spans with the
/// larger of their point counts and renormalized there; `q` is floored at
/// [`KL_EPSILON`].
pub fn kl_divergence(p: &DensityCurve, q: &DensityCurve) -> Result<f64> {
    if p.hi() <= q.lo() || q.hi() <= p.lo() {
        return Err(Error::DisjointSupport);
    }
    let lo = p.lo().min(q.lo());
    let hi = p.hi().max(q.hi());
    let grid = linspace(lo, hi, p.grid.len().max(q.grid.len()));
    let resample = |c: &DensityCurve| -> Result<Vec<f64>> {
        let v: Vec<f64> = grid.iter().map(|&x| c.value_at(x)).collect();
        let mass = trapezoid(&grid, &v);
        if mass <= 0.0 {
            return Err(Error::Degenerate("density vanishes on the shared grid".into()));
        }
        Ok(v.into_iter().map(|y| y / mass).collect())
    };
    let pv = resample(p)?;
    let qv = resample(q)?;
    let integrand: Vec<f64> = pv
        .iter()
        .zip(&qv)
        .map(|(&a, &b)| if a > 0.0 { a * libm::log(a / b.max(KL_EPSILON)) } else { 0.0 })
        .collect();
    Ok(trapezoid(&grid, &integrand))
}
