//! Principal components of a latent set, used as walk directions.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::eigen::jacobi_eigen;
use crate::error::{check_dim, Error, Result};
use crate::latent::{dot, mean_latent, LatentSet, LatentVector};
use crate::store::{load_latents, save_latents};

const ORTHONORMAL_TOL: f64 = 1e-6;
/// Eigenvalues at or below this fraction of the largest are treated as zero.
const NULL_RATIO: f64 = 1e-12;

/// Centering vector plus orthonormal eigenvectors of the sample covariance,
/// ordered by non-increasing variance.
#[derive(Debug, Clone, PartialEq)]
pub struct PrincipalBasis {
    mean: LatentVector,
    components: Vec<LatentVector>,
    variances: Vec<f64>,
}

impl PrincipalBasis {
    pub fn new(
        mean: LatentVector,
        components: Vec<LatentVector>,
        variances: Vec<f64>,
    ) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::invalid("a principal basis needs at least one component"));
        }
        if components.len() != variances.len() {
            return Err(Error::invalid(format!(
                "{} components but {} variances",
                components.len(),
                variances.len()
            )));
        }
        if components.len() > mean.dim() {
            return Err(Error::invalid("more components than dimensions"));
        }
        for c in &components {
            check_dim(mean.dim(), c.dim())?;
        }
        for (i, ci) in components.iter().enumerate() {
            for (j, cj) in components.iter().enumerate().skip(i) {
                let target = if i == j { 1.0 } else { 0.0 };
                let g = dot(ci.as_slice(), cj.as_slice());
                if (g - target).abs() > ORTHONORMAL_TOL {
                    return Err(Error::invalid(format!(
                        "components {i} and {j} are not orthonormal (inner product {g})"
                    )));
                }
            }
        }
        if variances.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("variances must be finite and nonnegative"));
        }
        if variances.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::invalid("variances must be sorted non-increasing"));
        }
        Ok(PrincipalBasis {
            mean,
            components,
            variances,
        })
    }

    pub fn mean(&self) -> &LatentVector {
        &self.mean
    }

    pub fn components(&self) -> &[LatentVector] {
        &self.components
    }

    /// Zero-based component lookup.
    pub fn component(&self, index: usize) -> Option<&LatentVector> {
        self.components.get(index)
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.mean.dim()
    }

    /// Coordinates `<w - mean, c_i>` for the first `k` components.
    pub fn project(&self, w: &LatentVector, k: usize) -> Result<Vec<f64>> {
        check_dim(self.dim(), w.dim())?;
        if k == 0 || k > self.len() {
            return Err(Error::invalid(format!(
                "k must lie in 1..={}, got {k}",
                self.len()
            )));
        }
        let centered: Vec<f64> = w
            .as_slice()
            .iter()
            .zip(self.mean.as_slice())
            .map(|(a, m)| a - m)
            .collect();
        Ok(self.components[..k]
            .iter()
            .map(|c| dot(&centered, c.as_slice()))
            .collect())
    }

    /// `mean + sum coords[i] * c_i`.
    pub fn reconstruct(&self, coords: &[f64]) -> Result<LatentVector> {
        if coords.len() > self.len() {
            return Err(Error::invalid("more coordinates than components"));
        }
        let mut out = self.mean.as_slice().to_vec();
        for (a, c) in coords.iter().zip(&self.components) {
            for (o, v) in out.iter_mut().zip(c.as_slice()) {
                *o += a * v;
            }
        }
        LatentVector::new(out)
    }
}

/// Sample covariance (divisor `count - 1`), row-major `dim x dim`.
pub fn sample_covariance(set: &LatentSet) -> Result<(LatentVector, Vec<f64>)> {
    if set.len() < 2 {
        return Err(Error::invalid("covariance needs at least two rows"));
    }
    let mean = mean_latent(set)?;
    let d = set.dim();
    let mut cov = vec![0.0; d * d];
    let mut centered = vec![0.0; d];
    for row in set {
        for ((c, x), m) in centered.iter_mut().zip(row.as_slice()).zip(mean.as_slice()) {
            *c = x - m;
        }
        for i in 0..d {
            let ci = centered[i];
            let line = &mut cov[i * d..(i + 1) * d];
            for j in i..d {
                line[j] += ci * centered[j];
            }
        }
    }
    let denom = (set.len() - 1) as f64;
    for i in 0..d {
        for j in i..d {
            let v = cov[i * d + j] / denom;
            cov[i * d + j] = v;
            cov[j * d + i] = v;
        }
    }
    Ok((mean, cov))
}

/// Flip `v` so its largest-magnitude coordinate is positive; ties go to the
/// lowest index.
pub fn canonicalize_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
}

struct Spectrum {
    mean: LatentVector,
    /// Sorted by non-increasing eigenvalue, eigenvalues clamped at zero.
    pairs: Vec<(f64, Vec<f64>)>,
}

fn spectrum(set: &LatentSet) -> Result<Spectrum> {
    if set.len() < 2 {
        return Err(Error::invalid(format!(
            "PCA needs at least two rows, got {}",
            set.len()
        )));
    }
    let first = &set.rows()[0];
    if set.iter().all(|r| r == first) {
        return Err(Error::ZeroVariance);
    }
    let (mean, cov) = sample_covariance(set)?;
    let d = set.dim();
    let eig = jacobi_eigen(&cov, d)?;
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.values[b].total_cmp(&eig.values[a]));
    let pairs = order
        .into_iter()
        .map(|k| {
            let mut v = eig.vector(k);
            canonicalize_sign(&mut v);
            (eig.values[k].max(0.0), v)
        })
        .collect();
    Ok(Spectrum { mean, pairs })
}

/// All `dim` eigenvalues of the sample covariance, non-increasing, clamped at 0.
pub fn covariance_spectrum(set: &LatentSet) -> Result<Vec<f64>> {
    Ok(spectrum(set)?.pairs.into_iter().map(|(l, _)| l).collect())
}

/// Top-`k` principal components of `set` (`None` keeps every nonzero one).
///
/// Directions whose variance is at most `1e-12` times the largest are
/// dropped, and at most `count - 1` components are returned.
pub fn compute_pca(set: &LatentSet, k: Option<usize>) -> Result<PrincipalBasis> {
    let d = set.dim();
    if let Some(k) = k {
        if k == 0 || k > d {
            return Err(Error::invalid(format!("k must lie in 1..={d}, got {k}")));
        }
    }
    let Spectrum { mean, pairs } = spectrum(set)?;
    let top = pairs[0].0;
    if top <= 0.0 {
        return Err(Error::ZeroVariance);
    }
    let limit = k.unwrap_or(d).min(set.len() - 1);
    let (variances, components): (Vec<f64>, Vec<LatentVector>) = pairs
        .into_iter()
        .take(limit)
        .take_while(|(l, _)| *l > NULL_RATIO * top)
        .map(|(l, v)| (l, LatentVector::new(v).expect("finite eigenvector")))
        .unzip();
    PrincipalBasis::new(mean, components, variances)
}

/// JSON sidecar describing a persisted basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisSidecar {
    pub version: u32,
    pub k: usize,
    pub variances: Vec<f64>,
    pub dim: usize,
    /// Hex digest of the latent file the basis was computed from.
    pub source_hash: String,
}

/// The three files a basis is persisted as, for a given stem.
#[derive(Debug, Clone)]
pub struct BasisPaths {
    pub components: PathBuf,
    pub mean: PathBuf,
    pub sidecar: PathBuf,
}

impl BasisPaths {
    pub fn new(dir: &Path, stem: &str) -> Self {
        BasisPaths {
            components: dir.join(format!("{stem}.components.lvec")),
            mean: dir.join(format!("{stem}.mean.lvec")),
            sidecar: dir.join(format!("{stem}.json")),
        }
    }
}

pub fn save_basis(basis: &PrincipalBasis, paths: &BasisPaths, source_hash: &str) -> Result<()> {
    save_latents(&LatentSet::new(basis.components.clone(), 0)?, &paths.components)?;
    save_latents(&LatentSet::new(vec![basis.mean.clone()], 0)?, &paths.mean)?;
    let sidecar = BasisSidecar {
        version: 1,
        k: basis.len(),
        variances: basis.variances.clone(),
        dim: basis.dim(),
        source_hash: source_hash.to_string(),
    };
    let mut text = serde_json::to_string_pretty(&sidecar)?;
    text.push('\n');
    fs::write(&paths.sidecar, text).map_err(|e| Error::io(&paths.sidecar, e))
}

/// Load a persisted basis. Components come back rounded to binary32.
pub fn load_basis(paths: &BasisPaths) -> Result<(PrincipalBasis, BasisSidecar)> {
    let text = fs::read_to_string(&paths.sidecar).map_err(|e| Error::io(&paths.sidecar, e))?;
    let sidecar: BasisSidecar = serde_json::from_str(&text)?;
    if sidecar.version != 1 {
        return Err(Error::InvalidInput(format!(
            "unsupported basis sidecar version {}",
            sidecar.version
        )));
    }
    let components = load_latents(&paths.components)?;
    let mean = load_latents(&paths.mean)?;
    if mean.len() != 1 || components.len() != sidecar.k || components.dim() != sidecar.dim {
        return Err(Error::InvalidInput(format!(
            "basis files disagree with sidecar (k={}, dim={})",
            sidecar.k, sidecar.dim
        )));
    }
    let mean = mean.into_rows().remove(0);
    let basis = PrincipalBasis::new(mean, components.into_rows(), sidecar.variances.clone())?;
    Ok((basis, sidecar))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::latent::sample_latents;

    fn set(rows: &[&[f64]]) -> LatentSet {
        LatentSet::new(
            rows.iter().map(|r| LatentVector::new(r.to_vec()).unwrap()).collect(),
            0,
        )
        .unwrap()
    }

    #[test]
    fn axis_aligned_data() {
        let s = set(&[&[1.0, 0.0], &[-1.0, 0.0], &[2.0, 0.0], &[-2.0, 0.0]]);
        let basis = compute_pca(&s, None).unwrap();
        assert_eq!(basis.len(), 1);
        assert_eq!(basis.components()[0].as_slice(), &[1.0, 0.0]);
        assert!((basis.variances()[0] - 10.0 / 3.0).abs() < 1e-12);
        let spectrum = covariance_spectrum(&s).unwrap();
        assert_eq!(spectrum[1], 0.0);
    }

    #[test]
    fn two_rows_give_one_component_along_their_difference() {
        let s = set(&[&[1.0, 2.0, 0.5, -1.0], &[3.0, -1.0, 0.5, 2.0]]);
        let basis = compute_pca(&s, None).unwrap();
        assert_eq!(basis.len(), 1);
        let diff = [2.0, -3.0, 0.0, 3.0];
        let norm = dot(&diff, &diff).sqrt();
        let cos = dot(basis.components()[0].as_slice(), &diff) / norm;
        assert!((cos.abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identical_rows_have_zero_variance() {
        let s = set(&[&[1.0, 2.0], &[1.0, 2.0], &[1.0, 2.0]]);
        assert!(matches!(compute_pca(&s, None), Err(Error::ZeroVariance)));
    }

    #[test]
    fn argument_checks() {
        let s = sample_latents(10, 3, 1).unwrap();
        assert!(matches!(compute_pca(&s, Some(4)), Err(Error::InvalidArgument(_))));
        assert!(matches!(compute_pca(&s, Some(0)), Err(Error::InvalidArgument(_))));
        let one = sample_latents(1, 3, 1).unwrap();
        assert!(matches!(compute_pca(&one, None), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn top_k_is_a_prefix_of_the_full_basis() {
        let s = sample_latents(40, 6, 2).unwrap();
        let full = compute_pca(&s, None).unwrap();
        let top = compute_pca(&s, Some(2)).unwrap();
        assert_eq!(top.components(), &full.components()[..2]);
        assert_eq!(top.variances(), &full.variances()[..2]);
    }

    #[test]
    fn sign_convention() {
        let mut v = vec![0.3, -0.9, 0.1];
        canonicalize_sign(&mut v);
        assert_eq!(v, vec![-0.3, 0.9, -0.1]);
        let mut tie = vec![-0.5, 0.5];
        canonicalize_sign(&mut tie);
        assert_eq!(tie, vec![0.5, -0.5]);
    }

    #[test]
    fn projection_examples() {
        let s = sample_latents(30, 5, 11).unwrap();
        let basis = compute_pca(&s, None).unwrap();
        assert_eq!(basis.len(), 5);
        let zero = basis.project(basis.mean(), 5).unwrap();
        assert!(zero.iter().all(|x| x.abs() < 1e-12));

        let w = basis.mean().add_scaled(&basis.components()[0], 2.0).unwrap();
        let coords = basis.project(&w, 5).unwrap();
        assert!((coords[0] - 2.0).abs() < 1e-12);
        assert!(coords[1..].iter().all(|x| x.abs() < 1e-12));

        let w = sample_latents(1, 5, 99).unwrap().into_rows().remove(0);
        let coords = basis.project(&w, 5).unwrap();
        let back = basis.reconstruct(&coords).unwrap();
        for j in 0..5 {
            assert!((back[j] - w[j]).abs() < 1e-9);
        }
        assert!(basis.project(&w, 6).is_err());
        assert!(basis.project(&LatentVector::zeros(4).unwrap(), 1).is_err());
    }

    #[test]
    fn persisted_basis_loads_back() {
        let dir = tempfile::tempdir().unwrap();
        let s = sample_latents(60, 8, 3).unwrap();
        let basis = compute_pca(&s, Some(4)).unwrap();
        let paths = BasisPaths::new(dir.path(), "pca");
        save_basis(&basis, &paths, "abc").unwrap();
        let (loaded, sidecar) = load_basis(&paths).unwrap();
        assert_eq!(sidecar.k, 4);
        assert_eq!(sidecar.dim, 8);
        assert_eq!(sidecar.source_hash, "abc");
        assert_eq!(loaded.variances(), basis.variances());
        for (a, b) in loaded.components().iter().zip(basis.components()) {
            for j in 0..8 {
                assert!((a[j] - b[j]).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn basis_validation() {
        let mean = LatentVector::zeros(2).unwrap();
        let c = |v: &[f64]| LatentVector::new(v.to_vec()).unwrap();
        assert!(PrincipalBasis::new(mean.clone(), vec![c(&[1.0, 0.0]), c(&[1.0, 0.0])], vec![2.0, 1.0]).is_err());
        assert!(PrincipalBasis::new(mean.clone(), vec![c(&[1.0, 0.0]), c(&[0.0, 1.0])], vec![1.0, 2.0]).is_err());
        assert!(PrincipalBasis::new(mean, vec![c(&[2.0, 0.0])], vec![1.0]).is_err());
    }
}
