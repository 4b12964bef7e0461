//! Latent vectors, seeded sampling and truncation toward the center of mass.

use std::ops::Index;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::rng::DetRng;

/// A point in the generator's intermediate latent space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct LatentVector(Vec<f64>);

impl LatentVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("latent vector must have dim >= 1"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("latent coordinate {i} is not finite")));
        }
        Ok(LatentVector(values))
    }

    pub fn zeros(dim: usize) -> Result<Self> {
        Self::new(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn dot(&self, other: &LatentVector) -> Result<f64> {
        check_dim(self.dim(), other.dim())?;
        Ok(dot(&self.0, &other.0))
    }

    pub fn norm(&self) -> f64 {
        dot(&self.0, &self.0).sqrt()
    }

    /// `self + scale * direction`.
    pub fn add_scaled(&self, direction: &LatentVector, scale: f64) -> Result<LatentVector> {
        check_dim(self.dim(), direction.dim())?;
        let values = self
            .0
            .iter()
            .zip(&direction.0)
            .map(|(w, c)| w + scale * c)
            .collect();
        LatentVector::new(values)
    }

    pub fn negated(&self) -> LatentVector {
        LatentVector(self.0.iter().map(|v| -v).collect())
    }
}

impl TryFrom<Vec<f64>> for LatentVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        LatentVector::new(values)
    }
}

impl From<LatentVector> for Vec<f64> {
    fn from(v: LatentVector) -> Self {
        v.0
    }
}

impl Index<usize> for LatentVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// An ordered, nonempty collection of latents sharing one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentSet {
    rows: Vec<LatentVector>,
    dim: usize,
    seed: u64,
}

impl LatentSet {
    pub fn new(rows: Vec<LatentVector>, seed: u64) -> Result<Self> {
        let dim = rows
            .first()
            .ok_or_else(|| Error::invalid("latent set must contain at least one row"))?
            .dim();
        for row in &rows {
            check_dim(dim, row.dim())?;
        }
        Ok(LatentSet { rows, dim, seed })
    }

    pub fn rows(&self) -> &[LatentVector] {
        &self.rows
    }

    pub fn into_rows(self) -> Vec<LatentVector> {
        self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Seed the set was sampled with, 0 when loaded from disk.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn iter(&self) -> std::slice::Iter<'_, LatentVector> {
        self.rows.iter()
    }
}

impl<'a> IntoIterator for &'a LatentSet {
    type Item = &'a LatentVector;
    type IntoIter = std::slice::Iter<'a, LatentVector>;

    fn into_iter(self) -> Self::IntoIter {
        self.rows.iter()
    }
}

/// `count` i.i.d. standard-normal vectors, row by row from one [`DetRng`] stream.
pub fn sample_latents(count: usize, dim: usize, seed: u64) -> Result<LatentSet> {
    if count == 0 || dim == 0 {
        return Err(Error::invalid(format!(
            "sample_latents needs count >= 1 and dim >= 1, got count={count} dim={dim}"
        )));
    }
    let mut rng = DetRng::seed_from_u64(seed);
    let rows = (0..count)
        .map(|_| LatentVector((0..dim).map(|_| rng.standard_normal()).collect()))
        .collect();
    LatentSet::new(rows, seed)
}

pub fn mean_latent(set: &LatentSet) -> Result<LatentVector> {
    if set.is_empty() {
        return Err(Error::invalid("mean of an empty latent set"));
    }
    let mut acc = vec![0.0; set.dim()];
    for row in set {
        for (a, v) in acc.iter_mut().zip(row.as_slice()) {
            *a += v;
        }
    }
    let n = set.len() as f64;
    LatentVector::new(acc.into_iter().map(|a| a / n).collect())
}

/// Truncation factor `psi` and the center of mass it pulls toward.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncationParams {
    psi: f64,
    center: LatentVector,
}

impl TruncationParams {
    pub fn new(psi: f64, center: LatentVector) -> Result<Self> {
        if !(0.0..=1.0).contains(&psi) {
            return Err(Error::invalid(format!("psi must lie in [0, 1], got {psi}")));
        }
        Ok(TruncationParams { psi, center })
    }

    pub fn psi(&self) -> f64 {
        self.psi
    }

    pub fn center(&self) -> &LatentVector {
        &self.center
    }
}

/// `center + psi * (w - center)`, coordinate-wise.
pub fn truncate_latent(w: &LatentVector, params: &TruncationParams) -> Result<LatentVector> {
    check_dim(params.center.dim(), w.dim())?;
    let psi = params.psi;
    let values = w
        .0
        .iter()
        .zip(&params.center.0)
        .map(|(x, c)| c + psi * (x - c))
        .collect();
    LatentVector::new(values)
}

pub fn truncate_set(set: &LatentSet, params: &TruncationParams) -> Result<LatentSet> {
    let rows = set
        .iter()
        .map(|w| truncate_latent(w, params))
        .collect::<Result<Vec<_>>>()?;
    LatentSet::new(rows, set.seed())
}
