//! Linear attribute boundaries for single-semantic latent editing.
//!
//! A soft-margin linear SVM is trained by full-batch subgradient descent on
//! `lambda/2 |v|^2 + mean(max(0, 1 - y (v.x + b)))` with step `1/sqrt(t)`
//! for a fixed number of iterations, keeping the iterate with the lowest
//! objective. The result is rescaled so the normal has unit length and
//! points toward the `true` class.

use crate::error::{check_dim, Error, Result};
use crate::latent::{dot, LatentSet, LatentVector};

pub const ITERATIONS: usize = 10_000;
pub const LAMBDA: f64 = 1e-4;
/// Relative objective improvement over the last tenth of the run below which
/// the fit counts as converged.
const CONVERGED_REL: f64 = 1e-6;

/// `{x : normal . x + offset = 0}` with unit `normal`.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperplane {
    normal: LatentVector,
    offset: f64,
}

impl Hyperplane {
    pub fn new(normal: LatentVector, offset: f64) -> Result<Self> {
        let n = normal.norm();
        if (n - 1.0).abs() > 1e-9 || !offset.is_finite() {
            return Err(Error::invalid(format!("hyperplane normal must be unit length, has norm {n}")));
        }
        Ok(Hyperplane { normal, offset })
    }

    pub fn normal(&self) -> &LatentVector {
        &self.normal
    }

    /// Signed distance of the origin.
    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// Positive on the side the normal points to.
    pub fn signed_distance(&self, w: &LatentVector) -> Result<f64> {
        Ok(self.normal.dot(w)? + self.offset)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryFit {
    pub hyperplane: Hyperplane,
    pub converged: bool,
    /// Training points on the wrong side of the returned hyperplane.
    pub misclassified: usize,
}

pub fn fit_linear_boundary(latents: &LatentSet, labels: &[bool]) -> Result<BoundaryFit> {
    if labels.len() != latents.len() {
        return Err(Error::invalid(format!(
            "{} labels for {} latents",
            labels.len(),
            latents.len()
        )));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 || positives == labels.len() {
        return Err(Error::invalid("boundary fitting needs both classes"));
    }
    let d = latents.dim();
    let n = latents.len() as f64;
    let ys: Vec<f64> = labels.iter().map(|&l| if l { 1.0 } else { -1.0 }).collect();
    let xs: Vec<&[f64]> = latents.iter().map(LatentVector::as_slice).collect();

    let objective = |v: &[f64], b: f64| {
        let hinge: f64 = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (1.0 - y * (dot(v, x) + b)).max(0.0))
            .sum();
        0.5 * LAMBDA * dot(v, v) + hinge / n
    };

    let mut v = vec![0.0; d];
    let mut b = 0.0;
    let mut best = (objective(&v, b), v.clone(), b);
    let mut best_at_tail = f64::NAN;
    let tail_start = ITERATIONS - ITERATIONS / 10;
    let mut grad = vec![0.0; d];
    for t in 1..=ITERATIONS {
        for (g, vi) in grad.iter_mut().zip(&v) {
            *g = LAMBDA * vi;
        }
        let mut grad_b = 0.0;
        for (x, y) in xs.iter().zip(&ys) {
            if y * (dot(&v, x) + b) < 1.0 {
                for (g, xi) in grad.iter_mut().zip(x.iter()) {
                    *g -= y * xi / n;
                }
                grad_b -= y / n;
            }
        }
        let eta = 1.0 / (t as f64).sqrt();
        for (vi, g) in v.iter_mut().zip(&grad) {
            *vi -= eta * g;
        }
        b -= eta * grad_b;
        let j = objective(&v, b);
        if j < best.0 {
            best = (j, v.clone(), b);
        }
        if t == tail_start {
            best_at_tail = best.0;
        }
    }

    let (best_j, v, b) = best;
    let norm = dot(&v, &v).sqrt();
    if norm == 0.0 {
        return Err(Error::Degenerate("boundary normal collapsed to zero".into()));
    }
    let hyperplane = Hyperplane::new(
        LatentVector::new(v.iter().map(|x| x / norm).collect())?,
        b / norm,
    )?;
    let converged = best_at_tail - best_j <= CONVERGED_REL * best_at_tail.abs().max(1e-12);
    let misclassified = latents
        .iter()
        .zip(labels)
        .filter(|(x, &l)| {
            let s = hyperplane.signed_distance(x).expect("dims match");
            (s > 0.0) != l
        })
        .count();
    Ok(BoundaryFit {
        hyperplane,
        converged,
        misclassified,
    })
}

/// `w + distance * normal`.
pub fn shift_along_boundary(w: &LatentVector, h: &Hyperplane, distance: f64) -> Result<LatentVector> {
    check_dim(h.normal.dim(), w.dim())?;
    w.add_scaled(&h.normal, distance)
}
