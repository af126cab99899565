use std::sync::Arc;

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

use super::pca::{PcaModel, PcaSize};
use super::{check_radius, euclidean, Generated, NeighborhoodGenerator};
use crate::error::{Error, Result};
use crate::types::{Dataset, Instance};

/// Gaussian kernel density estimate over a training set, sampled only from
/// training points inside the neighbourhood of the explained instance.
#[derive(Clone, Debug, PartialEq)]
pub struct KdeModel {
    train: Arc<Dataset>,
    bandwidth: f64,
}

/// Training rows within `r` of an instance.
#[derive(Clone, Debug)]
pub struct Neighborhood {
    pub indices: Vec<usize>,
}

impl KdeModel {
    /// Fits the estimator. Without an explicit bandwidth, Scott's rule
    /// `h = n^(-1/(d+4)) * sigma_pooled` is used.
    pub fn fit(train: Arc<Dataset>, bandwidth: Option<f64>) -> Result<Self> {
        let bandwidth = match bandwidth {
            Some(h) if h > 0.0 && h.is_finite() => h,
            Some(h) => {
                return Err(Error::InvalidParameter(format!(
                    "bandwidth must be positive and finite, got {h}"
                )))
            }
            None => {
                let h = scott_bandwidth(&train);
                if !(h > 0.0) {
                    return Err(Error::InvalidParameter(
                        "training data has zero spread; pass a bandwidth explicitly".into(),
                    ));
                }
                h
            }
        };
        Ok(Self { train, bandwidth })
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn train(&self) -> &Dataset {
        &self.train
    }

    pub fn dim(&self) -> usize {
        self.train.d()
    }

    /// Training rows with `‖x − x_star‖ ≤ r`, or `NeighborhoodEmpty` carrying
    /// the distance to the closest row.
    pub fn neighborhood(&self, x_star: &[f64], r: f64) -> Result<Neighborhood> {
        check_radius(r)?;
        if x_star.len() != self.train.d() {
            return Err(Error::DimensionMismatch {
                expected: self.train.d(),
                actual: x_star.len(),
            });
        }
        let mut indices = Vec::new();
        let mut min_distance = f64::INFINITY;
        for (i, row) in self.train.rows().enumerate() {
            let dist = euclidean(row, x_star);
            min_distance = min_distance.min(dist);
            if dist <= r {
                indices.push(i);
            }
        }
        if indices.is_empty() {
            return Err(Error::NeighborhoodEmpty { r, min_distance });
        }
        Ok(Neighborhood { indices })
    }

    /// Draws one point, returning it with the index of the training row used
    /// as the kernel centre.
    pub fn sample_from<R: Rng + ?Sized>(
        &self,
        neighborhood: &Neighborhood,
        rng: &mut R,
    ) -> Result<(Instance, usize)> {
        let centre = neighborhood.indices[rng.random_range(0..neighborhood.indices.len())];
        let values = self
            .train
            .row(centre)
            .iter()
            .map(|&c| c + self.bandwidth * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Ok((Instance::new(values)?, centre))
    }

    /// Single draw: uniform training point within `r`, then Gaussian kernel.
    pub fn sample<R: Rng + ?Sized>(&self, x_star: &Instance, r: f64, rng: &mut R) -> Result<Instance> {
        let hood = self.neighborhood(x_star.values(), r)?;
        self.sample_from(&hood, rng).map(|(x, _)| x)
    }
}

/// Scott's rule with the root-mean per-feature sample variance.
pub(crate) fn scott_bandwidth(train: &Dataset) -> f64 {
    let (_, std) = train.column_stats();
    let pooled = (std.iter().map(|s| s * s).sum::<f64>() / std.len() as f64).sqrt();
    (train.n() as f64).powf(-1.0 / (train.d() as f64 + 4.0)) * pooled
}

impl NeighborhoodGenerator<Instance> for KdeModel {
    fn id(&self) -> &'static str {
        "kde"
    }

    fn sample_batch(
        &self,
        x_star: &Instance,
        r: f64,
        b: usize,
        rng: &mut dyn RngCore,
    ) -> Result<Vec<Generated<Instance>>> {
        let hood = self.neighborhood(x_star.values(), r)?;
        (0..b)
            .map(|_| self.sample_from(&hood, rng).map(|(x, _)| Generated::new(x)))
            .collect()
    }
}

/// KDE sampling in a PCA latent space; `r` is measured in latent units.
#[derive(Clone, Debug, PartialEq)]
pub struct KdePcaGenerator {
    pca: PcaModel,
    kde: KdeModel,
}

impl KdePcaGenerator {
    pub fn fit(train: &Dataset, size: PcaSize, bandwidth: Option<f64>) -> Result<Self> {
        let pca = PcaModel::fit(train, size)?;
        let latent = train
            .rows()
            .map(|row| pca.encode(row))
            .collect::<Result<Vec<_>>>()?;
        let kde = KdeModel::fit(Arc::new(Dataset::from_rows(latent)?), bandwidth)?;
        Ok(Self { pca, kde })
    }

    pub fn from_parts(pca: PcaModel, kde: KdeModel) -> Result<Self> {
        if kde.dim() != pca.latent_dim() {
            return Err(Error::DimensionMismatch {
                expected: pca.latent_dim(),
                actual: kde.dim(),
            });
        }
        Ok(Self { pca, kde })
    }

    pub fn pca(&self) -> &PcaModel {
        &self.pca
    }

    pub fn latent_kde(&self) -> &KdeModel {
        &self.kde
    }

    /// Encode, sample the latent KDE, decode.
    pub fn sample<R: Rng + ?Sized>(&self, x_star: &Instance, r: f64, rng: &mut R) -> Result<Instance> {
        let z_star = Instance::new(self.pca.encode(x_star.values())?)?;
        let z = self.kde.sample(&z_star, r, rng)?;
        self.pca.inverse(z.values())
    }
}

impl NeighborhoodGenerator<Instance> for KdePcaGenerator {
    fn id(&self) -> &'static str {
        "kdepca"
    }

    fn sample_batch(
        &self,
        x_star: &Instance,
        r: f64,
        b: usize,
        rng: &mut dyn RngCore,
    ) -> Result<Vec<Generated<Instance>>> {
        let z_star = self.pca.encode(x_star.values())?;
        let hood = self.kde.neighborhood(&z_star, r)?;
        (0..b)
            .map(|_| {
                let (z, _) = self.kde.sample_from(&hood, rng)?;
                self.pca.inverse(z.values()).map(Generated::new)
            })
            .collect()
    }
}
