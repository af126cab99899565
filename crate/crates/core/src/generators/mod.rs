//! Neighbourhood generators that keep perturbations on the training-data
//! manifold: a radius-restricted Gaussian KDE, the same KDE in a PCA latent
//! space, latent-cube perturbation through an encoder/decoder pair, and token
//! substitution through embedding neighbours.

use rand::RngCore;

use crate::error::Result;

mod codec;
mod embedding;
mod kde;
mod pca;
pub mod persist;

pub use codec::{vae_sample, IdentityCodec, LatentCodec, LinearAutoencoder, VaeGenerator};
pub use embedding::{EmbeddingDistance, EmbeddingTable};
pub use kde::{KdeModel, KdePcaGenerator, Neighborhood};
pub use pca::{PcaModel, PcaSize};

/// One generated neighbour. `perturbed_feature` is set by generators that
/// change a single, known interpretable feature per draw.
#[derive(Clone, Debug, PartialEq)]
pub struct Generated<I> {
    pub instance: I,
    pub perturbed_feature: Option<usize>,
}

impl<I> Generated<I> {
    pub fn new(instance: I) -> Self {
        Self {
            instance,
            perturbed_feature: None,
        }
    }
}

/// Draws perturbed instances within a neighbourhood of size `r` around `x_star`.
///
/// Implementations are immutable after fitting; all randomness comes from the
/// caller's stream, so identical seeds give identical samples.
pub trait NeighborhoodGenerator<I>: Send + Sync {
    fn id(&self) -> &'static str;

    fn sample_batch(
        &self,
        x_star: &I,
        r: f64,
        b: usize,
        rng: &mut dyn RngCore,
    ) -> Result<Vec<Generated<I>>>;
}

pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub(crate) fn check_radius(r: f64) -> Result<()> {
    if r.is_nan() || r < 0.0 {
        return Err(crate::Error::InvalidParameter(format!(
            "neighbourhood size r must be non-negative, got {r}"
        )));
    }
    Ok(())
}
