//! Generator + face-recognition embedder behind one session.
//!
//! Two implementations exist: [`toy::ToyBackend`], an in-process analytic
//! model whose behaviour has closed forms, and [`external::ExternalBackend`],
//! a client for a child process speaking the framed JSON protocol in
//! [`protocol`].

pub mod external;
pub mod protocol;
pub mod toy;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::latent::{dot, LatentVector};

pub use external::{ExternalBackend, ExternalConfig};
pub use toy::{ToyBackend, ToyConfig, ToyModel};

/// Capture metadata reported by the backend for one generated sample.
///
/// A field is `None` when the backend has no estimator for it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SampleMetadata {
    pub ied_px: Option<f64>,
    pub yaw_deg: Option<f64>,
    pub pitch_deg: Option<f64>,
    pub age_years: Option<f64>,
    pub illum: Option<f64>,
}

impl SampleMetadata {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("ied_px", self.ied_px),
            ("yaw_deg", self.yaw_deg),
            ("pitch_deg", self.pitch_deg),
            ("age_years", self.age_years),
            ("illum", self.illum),
        ];
        for (name, value) in fields {
            if let Some(v) = value {
                if !v.is_finite() {
                    return Err(Error::invalid(format!("metadata field {name} is not finite")));
                }
            }
        }
        if matches!(self.ied_px, Some(v) if v < 0.0) || matches!(self.age_years, Some(v) if v < 0.0) {
            return Err(Error::invalid("ied_px and age_years must be nonnegative"));
        }
        if matches!(self.illum, Some(v) if !(0.0..=1.0).contains(&v)) {
            return Err(Error::invalid("illum must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Handle to one generated sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRef {
    pub id: String,
    pub latent_hash: u64,
    pub metadata: SampleMetadata,
    pub image_uri: Option<String>,
    /// Quality scores in `[0, 100]` the backend computed alongside the sample.
    pub quality: BTreeMap<String, f64>,
}

/// Unit-norm identity embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    /// Normalize `values` to unit length.
    pub fn from_raw(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("embedding must be nonempty and finite"));
        }
        let norm = dot(&values, &values).sqrt();
        if norm == 0.0 {
            return Err(Error::ZeroEmbedding);
        }
        Ok(Embedding(values.into_iter().map(|v| v / norm).collect()))
    }

    /// Wrap values already known to be unit length, keeping their bits.
    pub(crate) fn from_unit(values: Vec<f64>) -> Self {
        Embedding(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

/// Cosine similarity of two unit embeddings, clamped to `[-1, 1]`.
pub fn similarity(a: &Embedding, b: &Embedding) -> Result<f64> {
    check_dim(a.dim(), b.dim())?;
    Ok(dot(&a.0, &b.0).clamp(-1.0, 1.0))
}

/// `similarity(a, b) >= threshold`, for a threshold in `(-1, 1]`.
pub fn verify(a: &Embedding, b: &Embedding, threshold: f64) -> Result<bool> {
    check_threshold(threshold)?;
    Ok(similarity(a, b)? >= threshold)
}

pub(crate) fn check_threshold(threshold: f64) -> Result<()> {
    if !(threshold > -1.0 && threshold <= 1.0) {
        return Err(Error::invalid(format!(
            "verification threshold must lie in (-1, 1], got {threshold}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Toy,
    External,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BackendConfig {
    Toy(ToyConfig),
    External(ExternalConfig),
}

enum Inner {
    Toy(ToyBackend),
    External(ExternalBackend),
}

/// A live backend. Requests are answered serially, in order.
pub struct Session {
    inner: Inner,
}

pub fn open_session(config: &BackendConfig) -> Result<Session> {
    let inner = match config {
        BackendConfig::Toy(cfg) => Inner::Toy(ToyBackend::new(cfg.clone())?),
        BackendConfig::External(cfg) => Inner::External(ExternalBackend::spawn(cfg)?),
    };
    Ok(Session { inner })
}

impl Session {
    pub fn kind(&self) -> BackendKind {
        match self.inner {
            Inner::Toy(_) => BackendKind::Toy,
            Inner::External(_) => BackendKind::External,
        }
    }

    pub fn dim(&self) -> usize {
        match &self.inner {
            Inner::Toy(b) => b.model().dim(),
            Inner::External(b) => b.dim(),
        }
    }

    pub fn embed_dim(&self) -> usize {
        match &self.inner {
            Inner::Toy(b) => b.model().embed_dim(),
            Inner::External(b) => b.embed_dim(),
        }
    }

    /// Render the latent under the caller-chosen `id`.
    pub fn generate(&mut self, id: &str, w: &LatentVector) -> Result<SampleRef> {
        check_dim(self.dim(), w.dim())?;
        match &mut self.inner {
            Inner::Toy(b) => b.generate(id, w),
            Inner::External(b) => b.generate(id, w),
        }
    }

    pub fn embed(&mut self, sample: &SampleRef) -> Result<Embedding> {
        let e = match &mut self.inner {
            Inner::Toy(b) => b.embed(sample)?,
            Inner::External(b) => b.embed(sample)?,
        };
        check_dim(self.embed_dim(), e.dim())?;
        Ok(e)
    }

    /// Backend-supplied latent center of mass, if it has one.
    pub fn center(&mut self) -> Result<Option<LatentVector>> {
        let c = match &mut self.inner {
            Inner::Toy(_) => None,
            Inner::External(b) => b.center()?,
        };
        if let Some(c) = &c {
            check_dim(self.dim(), c.dim())?;
        }
        Ok(c)
    }

    /// Drop any per-sample state held for `ids`.
    pub fn release<'a>(&mut self, ids: impl IntoIterator<Item = &'a str>) {
        match &mut self.inner {
            Inner::Toy(b) => ids.into_iter().for_each(|id| b.release(id)),
            Inner::External(b) => ids.into_iter().for_each(|id| b.release(id)),
        }
    }

    pub fn shutdown(self) -> Result<()> {
        match self.inner {
            Inner::Toy(_) => Ok(()),
            Inner::External(b) => b.shutdown(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(v: &[f64]) -> Embedding {
        Embedding::from_raw(v.to_vec()).unwrap()
    }

    #[test]
    fn similarity_examples() {
        let a = e(&[0.6, 0.8]);
        assert!((similarity(&a, &a).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(similarity(&e(&[1.0, 0.0]), &e(&[0.0, 1.0])).unwrap(), 0.0);
        assert_eq!(similarity(&e(&[1.0, 0.0]), &e(&[-1.0, 0.0])).unwrap(), -1.0);
        assert!(similarity(&a, &e(&[1.0, 0.0, 0.0])).is_err());
    }

    #[test]
    fn similarity_is_symmetric_and_bounded() {
        let mut rng = crate::rng::DetRng::seed_from_u64(3);
        for _ in 0..200 {
            let a = e(&(0..6).map(|_| rng.standard_normal()).collect::<Vec<_>>());
            let b = e(&(0..6).map(|_| rng.standard_normal()).collect::<Vec<_>>());
            let s = similarity(&a, &b).unwrap();
            assert_eq!(s.to_bits(), similarity(&b, &a).unwrap().to_bits());
            assert!(s.abs() <= 1.0);
        }
    }

    #[test]
    fn verify_uses_inclusive_threshold() {
        let a = e(&[1.0, 0.0]);
        let b = e(&[0.85, (1.0f64 - 0.85 * 0.85).sqrt()]);
        assert!(verify(&a, &b, 0.8).unwrap());
        let s = similarity(&a, &b).unwrap();
        assert!(verify(&a, &b, s).unwrap());
        assert!(!verify(&a, &b, s + 1e-12).unwrap());
        assert!(matches!(verify(&a, &b, -1.0), Err(Error::InvalidArgument(_))));
        assert!(verify(&a, &b, 1.5).is_err());
        assert!(verify(&a, &b, f64::NAN).is_err());
    }

    #[test]
    fn zero_embedding_is_an_error() {
        assert!(matches!(Embedding::from_raw(vec![0.0, 0.0]), Err(Error::ZeroEmbedding)));
    }

    #[test]
    fn metadata_validation() {
        let mut m = SampleMetadata {
            illum: Some(0.5),
            ..Default::default()
        };
        assert!(m.validate().is_ok());
        m.illum = Some(1.5);
        assert!(m.validate().is_err());
        m.illum = None;
        m.yaw_deg = Some(f64::INFINITY);
        assert!(m.validate().is_err());
    }

    #[test]
    fn toy_session_echoes_config() {
        let s = open_session(&BackendConfig::Toy(ToyConfig {
            seed: 5,
            dim: 16,
            embed_dim: 8,
        }))
        .unwrap();
        assert_eq!((s.kind(), s.dim(), s.embed_dim()), (BackendKind::Toy, 16, 8));
    }

    #[test]
    fn sessions_with_the_same_config_agree() {
        let cfg = BackendConfig::Toy(ToyConfig {
            seed: 5,
            dim: 16,
            embed_dim: 8,
        });
        let mut a = open_session(&cfg).unwrap();
        let mut b = open_session(&cfg).unwrap();
        let w = crate::latent::sample_latents(1, 16, 2).unwrap().into_rows().remove(0);
        let ea = a.generate("x", &w).and_then(|r| a.embed(&r)).unwrap();
        let eb = b.generate("x", &w).and_then(|r| b.embed(&r)).unwrap();
        assert_eq!(ea, eb);
        assert!(a.generate("y", &LatentVector::zeros(3).unwrap()).is_err());
    }
}
