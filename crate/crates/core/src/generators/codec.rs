use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};

use super::pca::{PcaModel, PcaSize};
use super::{check_radius, Generated, NeighborhoodGenerator};
use crate::error::{Error, Result};
use crate::types::{Dataset, Instance};

/// An encoder/decoder pair between instances and an `m`-dimensional latent space.
pub trait LatentCodec: Send + Sync {
    fn input_dim(&self) -> usize;
    fn latent_dim(&self) -> usize;
    fn encode(&self, x: &[f64]) -> Result<Vec<f64>>;
    fn decode(&self, z: &[f64]) -> Result<Instance>;
}

/// `encode` and `decode` are both the identity (`m = d`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IdentityCodec {
    pub dim: usize,
}

impl LatentCodec for IdentityCodec {
    fn input_dim(&self) -> usize {
        self.dim
    }

    fn latent_dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: x.len(),
            });
        }
        Ok(x.to_vec())
    }

    fn decode(&self, z: &[f64]) -> Result<Instance> {
        if z.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: z.len(),
            });
        }
        Instance::new(z.to_vec())
    }
}

/// Linear autoencoder `x ↦ D(Ex + b_e) + b_d`, initialised from PCA and
/// refined by full-batch gradient descent on the mean squared reconstruction
/// error. Stands in for a trained variational autoencoder.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearAutoencoder {
    encoder: DMatrix<f64>,
    encoder_bias: DVector<f64>,
    decoder: DMatrix<f64>,
    decoder_bias: DVector<f64>,
}

impl LinearAutoencoder {
    pub fn from_pca(pca: &PcaModel) -> Self {
        let (m, d) = (pca.latent_dim(), pca.input_dim());
        let encoder = DMatrix::from_fn(m, d, |k, j| pca.components()[k][j]);
        let mean = DVector::from_column_slice(pca.mean());
        let encoder_bias = -(&encoder * &mean);
        Self {
            decoder: encoder.transpose(),
            encoder,
            encoder_bias,
            decoder_bias: mean,
        }
    }

    pub fn fit(train: &Dataset, m: usize, epochs: usize, learning_rate: f64) -> Result<Self> {
        let mut ae = Self::from_pca(&PcaModel::fit(train, PcaSize::Components(m))?);
        let (n, d) = (train.n(), train.d());
        let x = DMatrix::from_fn(d, n, |j, i| train.row(i)[j]);
        let ones = DVector::from_element(n, 1.0);
        let scale = 2.0 / (n * d) as f64;
        for _ in 0..epochs {
            let z = &ae.encoder * &x + &ae.encoder_bias * ones.transpose();
            let recon = &ae.decoder * &z + &ae.decoder_bias * ones.transpose();
            let err = (recon - &x) * scale;
            let grad_decoder = &err * z.transpose();
            let grad_decoder_bias = &err * &ones;
            let back = ae.decoder.transpose() * &err;
            let grad_encoder = &back * x.transpose();
            let grad_encoder_bias = &back * &ones;
            ae.decoder -= grad_decoder * learning_rate;
            ae.decoder_bias -= grad_decoder_bias * learning_rate;
            ae.encoder -= grad_encoder * learning_rate;
            ae.encoder_bias -= grad_encoder_bias * learning_rate;
        }
        Ok(ae)
    }

    /// Mean squared reconstruction error per coordinate.
    pub fn reconstruction_error(&self, data: &Dataset) -> Result<f64> {
        let mut total = 0.0;
        for row in data.rows() {
            let back = self.decode(&self.encode(row)?)?;
            total += back
                .values()
                .iter()
                .zip(row)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>();
        }
        Ok(total / (data.n() * data.d()) as f64)
    }
}

impl LatentCodec for LinearAutoencoder {
    fn input_dim(&self) -> usize {
        self.encoder.ncols()
    }

    fn latent_dim(&self) -> usize {
        self.encoder.nrows()
    }

    fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: x.len(),
            });
        }
        let z = &self.encoder * DVector::from_column_slice(x) + &self.encoder_bias;
        Ok(z.iter().copied().collect())
    }

    fn decode(&self, z: &[f64]) -> Result<Instance> {
        if z.len() != self.latent_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.latent_dim(),
                actual: z.len(),
            });
        }
        let x = &self.decoder * DVector::from_column_slice(z) + &self.decoder_bias;
        Instance::new(x.iter().copied().collect())
    }
}

/// Latent perturbation: `decode(encode(x_star) + ε)`, `ε ~ Uniform([-r, r]^m)`.
pub fn vae_sample<C, R>(codec: &C, x_star: &Instance, r: f64, rng: &mut R) -> Result<Instance>
where
    C: LatentCodec + ?Sized,
    R: Rng + ?Sized,
{
    check_radius(r)?;
    let mut z = codec.encode(x_star.values())?;
    perturb_latent(&mut z, r, rng);
    codec.decode(&z)
}

fn perturb_latent<R: Rng + ?Sized>(z: &mut [f64], r: f64, rng: &mut R) {
    if r > 0.0 {
        for zk in z.iter_mut() {
            *zk += rng.random_range(-r..=r);
        }
    }
}

/// Neighbourhood generator over any [`LatentCodec`].
pub struct VaeGenerator<C> {
    pub codec: C,
}

impl<C: LatentCodec> VaeGenerator<C> {
    pub fn new(codec: C) -> Self {
        Self { codec }
    }
}

impl<C: LatentCodec> NeighborhoodGenerator<Instance> for VaeGenerator<C> {
    fn id(&self) -> &'static str {
        "vae"
    }

    fn sample_batch(
        &self,
        x_star: &Instance,
        r: f64,
        b: usize,
        rng: &mut dyn RngCore,
    ) -> Result<Vec<Generated<Instance>>> {
        check_radius(r)?;
        let z_star = self.codec.encode(x_star.values())?;
        (0..b)
            .map(|_| {
                let mut z = z_star.clone();
                perturb_latent(&mut z, r, rng);
                self.codec.decode(&z).map(Generated::new)
            })
            .collect()
    }
}
