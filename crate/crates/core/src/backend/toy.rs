//! Linear-then-normalize toy generator/embedder.
//!
//! From `seed` one [`DetRng`] stream draws, in order:
//!
//! 1. `B`, an `embed_dim x dim` matrix of standard normals (row-major);
//! 2. six unit rows `g_yaw, g_pitch, g_age, g_ied, g_illum, g_quality`, each
//!    a standard-normal draw of length `dim` divided by its norm.
//!
//! For a latent `w`:
//!
//! ```text
//! embedding(w) = B w / |B w|
//! yaw_deg      = 30 <g_yaw, w>
//! pitch_deg    = 30 <g_pitch, w>
//! age_years    = max(0, 35 + 12 <g_age, w>)
//! ied_px       = max(0, 100 + 20 <g_ied, w>)
//! illum        = logistic(<g_illum, w>)
//! quality.toy  = 100 logistic(<g_quality, w>)
//! ```

use std::collections::{BTreeMap, HashMap};

use crate::backend::{Embedding, SampleMetadata, SampleRef};
use crate::digest::digest_f64s;
use crate::error::{check_dim, BackendError, Error, Result};
use crate::latent::{dot, LatentVector};
use crate::rng::DetRng;

pub const TOY_QUALITY_METHOD: &str = "toy";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToyConfig {
    pub seed: u64,
    pub dim: usize,
    pub embed_dim: usize,
}

/// The closed-form model, without any per-session state.
#[derive(Debug, Clone)]
pub struct ToyModel {
    dim: usize,
    embed_dim: usize,
    matrix: Vec<f64>,
    g_yaw: Vec<f64>,
    g_pitch: Vec<f64>,
    g_age: Vec<f64>,
    g_ied: Vec<f64>,
    g_illum: Vec<f64>,
    g_quality: Vec<f64>,
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-x))
}

impl ToyModel {
    pub fn new(cfg: &ToyConfig) -> Result<Self> {
        if cfg.dim == 0 || cfg.embed_dim == 0 {
            return Err(Error::invalid("toy backend needs dim >= 1 and embed_dim >= 1"));
        }
        let mut rng = DetRng::seed_from_u64(cfg.seed);
        let matrix = (0..cfg.dim * cfg.embed_dim)
            .map(|_| rng.standard_normal())
            .collect();
        let mut unit_row = || {
            let row: Vec<f64> = (0..cfg.dim).map(|_| rng.standard_normal()).collect();
            let norm = dot(&row, &row).sqrt();
            row.into_iter().map(|v| v / norm).collect::<Vec<f64>>()
        };
        Ok(ToyModel {
            dim: cfg.dim,
            embed_dim: cfg.embed_dim,
            matrix,
            g_yaw: unit_row(),
            g_pitch: unit_row(),
            g_age: unit_row(),
            g_ied: unit_row(),
            g_illum: unit_row(),
            g_quality: unit_row(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    /// Row-major `embed_dim x dim` embedding matrix `B`.
    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    pub fn yaw_row(&self) -> &[f64] {
        &self.g_yaw
    }

    /// `B w`, before normalization.
    pub fn project(&self, w: &[f64]) -> Vec<f64> {
        self.matrix
            .chunks_exact(self.dim)
            .map(|row| dot(row, w))
            .collect()
    }

    pub fn metadata(&self, w: &[f64]) -> SampleMetadata {
        SampleMetadata {
            ied_px: Some((100.0 + 20.0 * dot(&self.g_ied, w)).max(0.0)),
            yaw_deg: Some(30.0 * dot(&self.g_yaw, w)),
            pitch_deg: Some(30.0 * dot(&self.g_pitch, w)),
            age_years: Some((35.0 + 12.0 * dot(&self.g_age, w)).max(0.0)),
            illum: Some(logistic(dot(&self.g_illum, w))),
        }
    }

    pub fn quality(&self, w: &[f64]) -> f64 {
        100.0 * logistic(dot(&self.g_quality, w))
    }

    pub fn embedding(&self, w: &[f64]) -> Result<Embedding> {
        Embedding::from_raw(self.project(w))
    }
}

/// In-process toy session; caches `B w` per generated id.
#[derive(Debug, Clone)]
pub struct ToyBackend {
    model: ToyModel,
    projected: HashMap<String, Vec<f64>>,
}

impl ToyBackend {
    pub fn new(cfg: ToyConfig) -> Result<Self> {
        Ok(ToyBackend {
            model: ToyModel::new(&cfg)?,
            projected: HashMap::new(),
        })
    }

    pub fn model(&self) -> &ToyModel {
        &self.model
    }

    pub fn generate(&mut self, id: &str, w: &LatentVector) -> Result<SampleRef> {
        check_dim(self.model.dim, w.dim())?;
        let x = w.as_slice();
        self.projected.insert(id.to_string(), self.model.project(x));
        Ok(SampleRef {
            id: id.to_string(),
            latent_hash: digest_f64s(x),
            metadata: self.model.metadata(x),
            image_uri: None,
            quality: BTreeMap::from([(TOY_QUALITY_METHOD.to_string(), self.model.quality(x))]),
        })
    }

    pub fn embed(&mut self, sample: &SampleRef) -> Result<Embedding> {
        let raw = self
            .projected
            .get(&sample.id)
            .ok_or_else(|| BackendError::UnknownRef(sample.id.clone()))?;
        Embedding::from_raw(raw.clone())
    }

    pub fn release(&mut self, id: &str) {
        self.projected.remove(id);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::similarity;
    use crate::latent::sample_latents;

    fn backend() -> ToyBackend {
        ToyBackend::new(ToyConfig {
            seed: 5,
            dim: 16,
            embed_dim: 8,
        })
        .unwrap()
    }

    #[test]
    fn origin_is_the_neutral_pose() {
        let mut b = backend();
        let r = b.generate("z", &LatentVector::zeros(16).unwrap()).unwrap();
        assert_eq!(r.metadata.yaw_deg, Some(0.0));
        assert_eq!(r.metadata.pitch_deg, Some(0.0));
        assert_eq!(r.metadata.age_years, Some(35.0));
        assert_eq!(r.metadata.ied_px, Some(100.0));
        assert_eq!(r.metadata.illum, Some(0.5));
        assert!(matches!(b.embed(&r), Err(Error::ZeroEmbedding)));
    }

    #[test]
    fn yaw_follows_the_published_formula() {
        let mut b = backend();
        // g_yaw is unit, so w = 1.5 g_yaw gives <g_yaw, w> = 1.5 and 30 * 1.5 = 45.
        let w: Vec<f64> = b.model().yaw_row().iter().map(|g| 1.5 * g).collect();
        let r = b.generate("y", &LatentVector::new(w).unwrap()).unwrap();
        assert!((r.metadata.yaw_deg.unwrap() - 45.0).abs() < 1e-12);
    }

    #[test]
    fn generate_and_embed_are_deterministic() {
        let mut b = backend();
        let w = sample_latents(1, 16, 8).unwrap().into_rows().remove(0);
        let r1 = b.generate("a", &w).unwrap();
        let r2 = b.generate("b", &w).unwrap();
        assert_eq!(r1.metadata, r2.metadata);
        assert_eq!(r1.latent_hash, r2.latent_hash);
        let e1 = b.embed(&r1).unwrap();
        let e2 = b.embed(&r2).unwrap();
        assert_eq!(e1, e2);

        let bw = b.model().project(w.as_slice());
        let norm = dot(&bw, &bw).sqrt();
        for (x, y) in e1.values().iter().zip(&bw) {
            assert_eq!(*x, y / norm);
        }
    }

    #[test]
    fn unknown_refs_are_rejected() {
        let mut b = backend();
        let w = sample_latents(1, 16, 8).unwrap().into_rows().remove(0);
        let mut r = b.generate("a", &w).unwrap();
        r.id = "nope".into();
        assert!(matches!(
            b.embed(&r),
            Err(Error::Backend(BackendError::UnknownRef(_)))
        ));
    }

    #[test]
    fn similarity_decays_monotonically_along_a_direction() {
        let model = backend().model().clone();
        let mut rng = DetRng::seed_from_u64(77);
        for _ in 0..100 {
            let w: Vec<f64> = (0..16).map(|_| rng.standard_normal()).collect();
            let mut c: Vec<f64> = (0..16).map(|_| rng.standard_normal()).collect();
            let n = dot(&c, &c).sqrt();
            c.iter_mut().for_each(|v| *v /= n);
            let base = model.embedding(&w).unwrap();
            let mut prev = f64::INFINITY;
            for step in 0..=20 {
                let t = 0.5 * step as f64;
                let moved: Vec<f64> = w.iter().zip(&c).map(|(a, b)| a + t * b).collect();
                let s = similarity(&base, &model.embedding(&moved).unwrap()).unwrap();
                assert!(s <= prev + 1e-9, "similarity rose from {prev} to {s} at t={t}");
                prev = s;
            }
        }
    }
}
