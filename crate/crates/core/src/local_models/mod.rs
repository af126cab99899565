//! Interpretable surrogates fitted to black-box outputs on generated
//! neighbours: ridge-linear, CART regression tree, and per-feature statistics
//! of one-at-a-time perturbations.

use serde_json::Value;

use crate::error::{Error, Result};

mod linear;
mod stats;
mod tree;

pub use linear::{linear_fit, weighted_linear_fit, LinearSurrogate, DEFAULT_RIDGE};
pub use stats::{stats_fit, FeatureStats, StatsSurrogate};
pub use tree::{tree_fit, TreeNode, TreeSurrogate};

/// Accumulated local samples in the interpretable space.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LocalData {
    pub xs: Vec<Vec<f64>>,
    pub ys: Vec<f64>,
    pub x_star: Vec<f64>,
    /// Black-box output at the explained instance.
    pub y_star: f64,
    /// Generator-reported perturbed feature per sample, when known.
    pub perturbed: Vec<Option<usize>>,
}

impl LocalData {
    pub fn new(x_star: Vec<f64>, y_star: f64) -> Self {
        Self {
            x_star,
            y_star,
            ..Default::default()
        }
    }

    pub fn push(&mut self, x: Vec<f64>, y: f64, perturbed: Option<usize>) {
        self.xs.push(x);
        self.ys.push(y);
        self.perturbed.push(perturbed);
    }

    pub fn len(&self) -> usize {
        self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x_star.len()
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.xs.len() != self.ys.len() || self.perturbed.len() != self.ys.len() {
            return Err(Error::InvalidParameter("local data columns have unequal length".into()));
        }
        if self.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let d = self.dim();
        for x in &self.xs {
            if x.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    actual: x.len(),
                });
            }
            if let Some(i) = x.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(i));
            }
        }
        if let Some(i) = self.ys.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(())
    }

    /// The single perturbed feature of each sample: the generator's annotation
    /// when present, otherwise the one coordinate differing from `x_star`.
    pub fn perturbed_features(&self) -> Result<Vec<usize>> {
        self.xs
            .iter()
            .zip(&self.perturbed)
            .enumerate()
            .map(|(index, (x, annotated))| match annotated {
                Some(j) => Ok(*j),
                None => {
                    let mut changed = x
                        .iter()
                        .zip(&self.x_star)
                        .enumerate()
                        .filter(|(_, (a, b))| a != b)
                        .map(|(j, _)| j);
                    match (changed.next(), changed.next()) {
                        (Some(j), None) => Ok(j),
                        _ => Err(Error::IncompatiblePerturbation {
                            index,
                            changed: x.iter().zip(&self.x_star).filter(|(a, b)| a != b).count(),
                        }),
                    }
                }
            })
            .collect()
    }
}

/// Surrogate family and its hyper-parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SurrogateFamily {
    Linear { lambda: f64 },
    Tree { max_depth: usize, min_samples_leaf: usize },
    Stats,
}

impl SurrogateFamily {
    pub fn linear() -> Self {
        Self::Linear {
            lambda: DEFAULT_RIDGE,
        }
    }

    pub fn tree() -> Self {
        Self::Tree {
            max_depth: 4,
            min_samples_leaf: 5,
        }
    }

    pub fn id(&self) -> &'static str {
        match self {
            Self::Linear { .. } => "linear",
            Self::Tree { .. } => "tree",
            Self::Stats => "stats",
        }
    }

    pub fn fit(&self, data: &LocalData) -> Result<Surrogate> {
        Ok(match *self {
            Self::Linear { lambda } => Surrogate::Linear(linear_fit(data, lambda)?),
            Self::Tree {
                max_depth,
                min_samples_leaf,
            } => Surrogate::Tree(tree_fit(data, max_depth, min_samples_leaf)?),
            Self::Stats => {
                data.validate()?;
                let perturbed = data.perturbed_features()?;
                Surrogate::Stats(stats_fit(data, &perturbed)?)
            }
        })
    }
}

/// A fitted surrogate of any family.
#[derive(Clone, Debug, PartialEq)]
pub enum Surrogate {
    Linear(LinearSurrogate),
    Tree(TreeSurrogate),
    Stats(StatsSurrogate),
}

impl Surrogate {
    /// Summary statistics: coefficients, impurity importances, or signed mean shifts.
    pub fn alpha(&self) -> &[f64] {
        match self {
            Surrogate::Linear(s) => &s.coefficients,
            Surrogate::Tree(s) => &s.importances,
            Surrogate::Stats(s) => &s.alpha,
        }
    }

    pub fn dim(&self) -> usize {
        self.alpha().len()
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: x.len(),
            });
        }
        Ok(match self {
            Surrogate::Linear(s) => s.predict(x),
            Surrogate::Tree(s) => s.predict(x),
            Surrogate::Stats(s) => s.predict(x),
        })
    }

    /// Mean squared error of the surrogate over `data`.
    pub fn training_error(&self, data: &LocalData) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut sse = 0.0;
        for (x, y) in data.xs.iter().zip(&data.ys) {
            sse += (self.predict(x)? - y).powi(2);
        }
        Ok(sse / data.len() as f64)
    }

    /// Family-specific detail for reports.
    pub fn detail_json(&self, feature_names: &[String]) -> Value {
        match self {
            Surrogate::Linear(s) => s.to_json(feature_names),
            Surrogate::Tree(s) => s.to_json(feature_names),
            Surrogate::Stats(s) => s.to_json(feature_names),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn training_error_of_constant_surrogate() {
        let mut data = LocalData::new(vec![0.0], 0.0);
        data.push(vec![0.0], 0.0, None);
        data.push(vec![1.0], 2.0, None);
        let s = Surrogate::Tree(TreeSurrogate::constant(1.0, 1, 4, 5));
        assert_eq!(s.training_error(&data).unwrap(), 1.0);
    }

    #[test]
    fn predict_checks_dimension() {
        let s = Surrogate::Tree(TreeSurrogate::constant(1.0, 2, 4, 5));
        assert!(s.predict(&[1.0]).is_err());
        assert_eq!(s.predict(&[3.0, -2.0]).unwrap(), 1.0);
    }

    #[test]
    fn perturbed_feature_derivation() {
        let mut data = LocalData::new(vec![0.0, 0.0], 1.0);
        data.push(vec![0.0, 0.5], 1.0, None);
        data.push(vec![0.0, 0.0], 1.0, Some(0));
        assert_eq!(data.perturbed_features().unwrap(), vec![1, 0]);
        data.push(vec![1.0, 0.5], 1.0, None);
        assert!(matches!(
            data.perturbed_features(),
            Err(Error::IncompatiblePerturbation { index: 2, changed: 2 })
        ));
    }
}
