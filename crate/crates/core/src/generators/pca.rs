use nalgebra::{DMatrix, SymmetricEigen};

use super::codec::LatentCodec;
use crate::error::{Error, Result};
use crate::types::{Dataset, Instance};

/// How many principal directions to keep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PcaSize {
    Components(usize),
    /// Smallest `m` whose cumulative explained-variance ratio reaches the value.
    VarianceThreshold(f64),
}

/// Principal directions of mean-centred training data.
#[derive(Clone, Debug, PartialEq)]
pub struct PcaModel {
    pub(crate) mean: Vec<f64>,
    /// `m` orthonormal rows of length `d`.
    pub(crate) components: Vec<Vec<f64>>,
    /// Non-increasing, one per component.
    pub(crate) eigenvalues: Vec<f64>,
    pub(crate) explained_variance_ratio: Vec<f64>,
}

impl PcaModel {
    pub fn fit(train: &Dataset, size: PcaSize) -> Result<Self> {
        let (n, d) = (train.n(), train.d());
        if n < 2 {
            return Err(Error::InvalidParameter(format!(
                "PCA needs at least 2 rows, got {n}"
            )));
        }
        match size {
            PcaSize::Components(m) if m == 0 || m > d => {
                return Err(Error::InvalidParameter(format!(
                    "component count must be in 1..={d}, got {m}"
                )))
            }
            PcaSize::VarianceThreshold(t) if !(t > 0.0 && t <= 1.0) => {
                return Err(Error::InvalidParameter(format!(
                    "variance threshold must be in (0, 1], got {t}"
                )))
            }
            _ => {}
        }

        let (mean, _) = train.column_stats();
        let centred = DMatrix::from_fn(n, d, |i, j| train.row(i)[j] - mean[j]);
        let cov = (centred.transpose() * &centred) / (n as f64 - 1.0);
        let eig = SymmetricEigen::new(cov);

        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let eigenvalues_all: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k].max(0.0)).collect();
        let total: f64 = eigenvalues_all.iter().sum();
        let ratios: Vec<f64> = eigenvalues_all
            .iter()
            .map(|&l| if total > 0.0 { l / total } else { 1.0 / d as f64 })
            .collect();

        let m = match size {
            PcaSize::Components(m) => m,
            PcaSize::VarianceThreshold(t) => {
                let mut cum = 0.0;
                let mut m = d;
                for (k, r) in ratios.iter().enumerate() {
                    cum += r;
                    // Tolerance absorbs rounding when t == 1.
                    if cum >= t - 1e-12 {
                        m = k + 1;
                        break;
                    }
                }
                m
            }
        };

        let components = order[..m]
            .iter()
            .map(|&k| {
                let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
                // Fix the sign so the largest-magnitude entry is positive.
                let pivot = v
                    .iter()
                    .copied()
                    .fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
                if pivot < 0.0 {
                    v.iter_mut().for_each(|x| *x = -*x);
                }
                v
            })
            .collect();

        Ok(Self {
            mean,
            components,
            eigenvalues: eigenvalues_all[..m].to_vec(),
            explained_variance_ratio: ratios[..m].to_vec(),
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.components.len()
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.components
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn explained_variance_ratio(&self) -> &[f64] {
        &self.explained_variance_ratio
    }

    /// Projects onto the retained components.
    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: x.len(),
            });
        }
        Ok(self
            .components
            .iter()
            .map(|c| c.iter().zip(x).zip(&self.mean).map(|((c, x), m)| c * (x - m)).sum())
            .collect())
    }

    /// `mean + zᵀ·components`; discarded directions contribute nothing.
    pub fn inverse(&self, z: &[f64]) -> Result<Instance> {
        if z.len() != self.latent_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.latent_dim(),
                actual: z.len(),
            });
        }
        if let Some(i) = z.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        let mut x = self.mean.clone();
        for (zk, c) in z.iter().zip(&self.components) {
            for (xi, ci) in x.iter_mut().zip(c) {
                *xi += zk * ci;
            }
        }
        Instance::new(x)
    }
}

impl LatentCodec for PcaModel {
    fn input_dim(&self) -> usize {
        self.input_dim()
    }

    fn latent_dim(&self) -> usize {
        self.latent_dim()
    }

    fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        PcaModel::encode(self, x)
    }

    fn decode(&self, z: &[f64]) -> Result<Instance> {
        self.inverse(z)
    }
}
