//! Synthetic mated-sample generation by identity-constrained walks along the
//! principal components of a generator's latent space, plus the quality gating
//! and biometric statistics used to evaluate the resulting dataset.

pub mod backend;
pub mod boundary;
pub mod digest;
pub mod eigen;
pub mod error;
pub mod eval;
pub mod filter;
pub mod manifest;
pub mod latent;
pub mod pca;
pub mod rng;
pub mod store;
pub mod walk;

pub use error::{BackendError, Error, Result, StoreError};
pub use latent::{
    mean_latent, sample_latents, truncate_latent, truncate_set, LatentSet, LatentVector,
    TruncationParams,
};
pub use pca::{compute_pca, PrincipalBasis};
