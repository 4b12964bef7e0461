//! Independent reference implementations shared by the integration tests
//! and the acceptance suite. Nothing here calls into the algorithms it checks.

#![allow(dead_code)]

use pcawalk_core::backend::ToyModel;
use pcawalk_core::rng::DetRng;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn normalize(a: &[f64]) -> Vec<f64> {
    let n = norm(a);
    a.iter().map(|x| x / n).collect()
}

/// Two-pass sample covariance, row-major.
pub fn covariance(rows: &[Vec<f64>]) -> Vec<f64> {
    let n = rows.len();
    let d = rows[0].len();
    let mut mean = vec![0.0; d];
    for r in rows {
        for (m, x) in mean.iter_mut().zip(r) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut cov = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            let s: f64 = rows.iter().map(|r| (r[i] - mean[i]) * (r[j] - mean[j])).sum();
            cov[i * d + j] = s / (n - 1) as f64;
        }
    }
    cov
}

/// Classical Jacobi: always annihilate the largest off-diagonal element.
/// Returns eigenpairs sorted by decreasing eigenvalue.
pub fn max_pivot_jacobi(a: &[f64], n: usize) -> Vec<(f64, Vec<f64>)> {
    let mut a = a.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    for _ in 0..100 * n * n {
        let (mut p, mut q, mut big) = (0, 1, 0.0f64);
        for i in 0..n {
            for j in i + 1..n {
                if a[i * n + j].abs() > big {
                    big = a[i * n + j].abs();
                    p = i;
                    q = j;
                }
            }
        }
        let scale: f64 = (0..n).map(|i| a[i * n + i].abs()).fold(0.0, f64::max);
        if big <= 1e-300 || big <= 1e-18 * scale {
            break;
        }
        let (app, aqq, apq) = (a[p * n + p], a[q * n + q], a[p * n + q]);
        let theta = 0.5 * (2.0 * apq).atan2(aqq - app);
        let (s, c) = theta.sin_cos();
        for k in 0..n {
            let akp = a[k * n + p];
            let akq = a[k * n + q];
            a[k * n + p] = c * akp - s * akq;
            a[k * n + q] = s * akp + c * akq;
        }
        for k in 0..n {
            let apk = a[p * n + k];
            let aqk = a[q * n + k];
            a[p * n + k] = c * apk - s * aqk;
            a[q * n + k] = s * apk + c * aqk;
        }
        for k in 0..n {
            let vkp = v[k * n + p];
            let vkq = v[k * n + q];
            v[k * n + p] = c * vkp - s * vkq;
            v[k * n + q] = s * vkp + c * vkq;
        }
    }
    let mut pairs: Vec<(f64, Vec<f64>)> = (0..n)
        .map(|k| (a[k * n + k], (0..n).map(|i| v[i * n + k]).collect()))
        .collect();
    pairs.sort_by(|x, y| y.0.total_cmp(&x.0));
    pairs
}

/// A toy instance where `B c` is orthogonal to `B w`, so the similarity along
/// the walk is `u / sqrt(u^2 + t^2 v^2)`.
pub struct OrthogonalInstance {
    pub w: Vec<f64>,
    pub c: Vec<f64>,
    /// Unit vector orthogonal to `c`, used as a second basis component.
    pub c2: Vec<f64>,
    pub u: f64,
    pub v: f64,
}

impl OrthogonalInstance {
    pub fn draw(model: &ToyModel, rng: &mut DetRng) -> Self {
        let d = model.dim();
        let b = model.matrix();
        let w: Vec<f64> = (0..d).map(|_| rng.standard_normal()).collect();
        let bw = model.project(&w);
        // g = B^T B w; any c orthogonal to g has B c orthogonal to B w
        let g: Vec<f64> = (0..d)
            .map(|j| (0..bw.len()).map(|i| b[i * d + j] * bw[i]).sum())
            .collect();
        let g = normalize(&g);
        let c = loop {
            let r: Vec<f64> = (0..d).map(|_| rng.standard_normal()).collect();
            let r: Vec<f64> = r.iter().zip(&g).map(|(x, gi)| x - dot(&r, &g) * gi).collect();
            // second pass for accuracy
            let k = dot(&r, &g);
            let r: Vec<f64> = r.iter().zip(&g).map(|(x, gi)| x - k * gi).collect();
            if norm(&r) > 1e-3 {
                break normalize(&r);
            }
        };
        let c2 = loop {
            let r: Vec<f64> = (0..d).map(|_| rng.standard_normal()).collect();
            let k = dot(&r, &c);
            let r: Vec<f64> = r.iter().zip(&c).map(|(x, ci)| x - k * ci).collect();
            if norm(&r) > 1e-3 {
                break normalize(&r);
            }
        };
        let u = norm(&bw);
        let v = norm(&model.project(&c));
        OrthogonalInstance { w, c, c2, u, v }
    }

    pub fn similarity_at(&self, t: f64) -> f64 {
        self.u / (self.u * self.u + t * t * self.v * self.v).sqrt()
    }

    /// Distance at which the similarity equals `theta`.
    pub fn t_star(&self, theta: f64) -> f64 {
        self.u / self.v * (1.0 / (theta * theta) - 1.0).sqrt()
    }

    pub fn closed_form_steps(&self, theta: f64, step: f64) -> usize {
        (self.t_star(theta) / step).floor() as usize
    }

    /// How far `t*/step` lies from the nearest integer.
    pub fn margin(&self, theta: f64, step: f64) -> f64 {
        let r = self.t_star(theta) / step;
        (r - r.round()).abs()
    }
}

/// Step-by-step walk using the model's projection directly.
pub fn brute_force_steps(model: &ToyModel, w: &[f64], c: &[f64], step: f64, theta: f64, max_steps: usize) -> usize {
    let base = normalize(&model.project(w));
    let mut n = 0;
    for i in 1..=max_steps {
        let t = i as f64 * step;
        let moved: Vec<f64> = w.iter().zip(c).map(|(a, b)| a + t * b).collect();
        let e = normalize(&model.project(&moved));
        if dot(&base, &e).clamp(-1.0, 1.0) >= theta {
            n = i;
        } else {
            break;
        }
    }
    n
}

/// Try every score and the value just above the maximum; keep the smallest
/// with FMR at most `target`.
pub fn threshold_oracle(scores: &[f64], target: f64) -> f64 {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut candidates: Vec<f64> = scores.to_vec();
    candidates.push(max.next_up());
    candidates
        .into_iter()
        .filter(|&t| {
            let hits = scores.iter().filter(|&&s| s >= t).count();
            hits as f64 / scores.len() as f64 <= target
        })
        .fold(f64::INFINITY, f64::min)
}

/// FNMR after discarding the `floor(d n)` lowest-quality pairs, ordering by
/// `(quality, input index)`.
pub fn edc_oracle(pairs: &[(f64, f64)], t: f64, d: f64) -> f64 {
    let mut keyed: Vec<(f64, usize, f64)> = pairs.iter().enumerate().map(|(i, &(q, s))| (q, i, s)).collect();
    keyed.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    let drop = (d * pairs.len() as f64).floor() as usize;
    let kept = &keyed[drop..];
    kept.iter().filter(|k| k.2 < t).count() as f64 / kept.len() as f64
}

/// Tabulated mixture of narrow Gaussians at `centers` with `weights`.
pub fn bump_mixture(centers: &[f64], weights: &[f64], sigma: f64, lo: f64, hi: f64, points: usize) -> (Vec<f64>, Vec<f64>) {
    let grid: Vec<f64> = (0..points).map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64).collect();
    let dens = grid
        .iter()
        .map(|&x| {
            centers
                .iter()
                .zip(weights)
                .map(|(c, w)| w * (-0.5 * ((x - c) / sigma).powi(2)).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt()))
                .sum()
        })
        .collect();
    (grid, dens)
}

pub fn discrete_kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).filter(|(a, _)| **a > 0.0).map(|(a, b)| a * (a / b).ln()).sum()
}
