use serde::{Deserialize, Serialize};

use super::{BlackBox, BlackBoxError, Classifier};
use crate::error::{Error, Result};
use crate::types::{Dataset, Instance};

/// Lower bound on neighbour distance in inverse-distance weights.
pub const DISTANCE_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Points {
    dim: usize,
    /// Row-major training features.
    features: Vec<f64>,
}

impl Points {
    fn from_dataset(train: &Dataset) -> Self {
        Self {
            dim: train.d(),
            features: train.rows().flatten().copied().collect(),
        }
    }

    fn len(&self) -> usize {
        self.features.len() / self.dim
    }

    /// The `k` nearest rows as `(distance, index)`, closest first; ties go to
    /// the lower index.
    fn nearest(&self, x: &[f64], k: usize) -> Vec<(f64, usize)> {
        let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
        for (i, row) in self.features.chunks_exact(self.dim).enumerate() {
            let d2: f64 = row.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
            if best.len() == k && d2 >= best[k - 1].0 {
                continue;
            }
            let pos = best.partition_point(|&(d, _)| d <= d2);
            best.insert(pos, (d2, i));
            best.truncate(k);
        }
        best.into_iter().map(|(d2, i)| (d2.sqrt(), i)).collect()
    }

    fn check(&self, x: &[f64]) -> Result<(), BlackBoxError> {
        if x.len() != self.dim {
            return Err(BlackBoxError::DimensionMismatch {
                expected: self.dim,
                actual: x.len(),
            });
        }
        Ok(())
    }
}

fn check_k(k: usize, n: usize) -> Result<()> {
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!("k must be in 1..={n}, got {k}")));
    }
    Ok(())
}

fn weight(distance: f64) -> f64 {
    1.0 / distance.max(DISTANCE_FLOOR)
}

/// Inverse-distance weighted k-nearest-neighbour regression.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnnRegressor {
    k: usize,
    points: Points,
    targets: Vec<f64>,
}

impl KnnRegressor {
    pub fn fit(train: &Dataset, targets: &[f64], k: usize) -> Result<Self> {
        check_k(k, train.n())?;
        if targets.len() != train.n() {
            return Err(Error::DimensionMismatch {
                expected: train.n(),
                actual: targets.len(),
            });
        }
        Ok(Self {
            k,
            points: Points::from_dataset(train),
            targets: targets.to_vec(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.dim == 0 || !self.points.features.len().is_multiple_of(self.points.dim) {
            return Err(Error::Parse("malformed kNN feature matrix".into()));
        }
        check_k(self.k, self.points.len())?;
        if self.targets.len() != self.points.len() {
            return Err(Error::Parse("kNN targets do not match rows".into()));
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.points.dim
    }

    pub fn predict_one(&self, x: &[f64]) -> Result<f64, BlackBoxError> {
        self.points.check(x)?;
        let (mut num, mut den) = (0.0, 0.0);
        for (dist, i) in self.points.nearest(x, self.k) {
            let w = weight(dist);
            num += w * self.targets[i];
            den += w;
        }
        Ok(num / den)
    }
}

impl BlackBox<Instance> for KnnRegressor {
    fn predict_batch(&self, xs: &[Instance]) -> Result<Vec<f64>, BlackBoxError> {
        xs.iter().map(|x| self.predict_one(x.values())).collect()
    }
}

/// Inverse-distance weighted k-nearest-neighbour class frequencies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnnClassifier {
    k: usize,
    points: Points,
    classes: Vec<String>,
    labels: Vec<usize>,
}

impl KnnClassifier {
    /// `labels` are class names; the class order is sorted and deduplicated.
    pub fn fit(train: &Dataset, labels: &[&str], k: usize) -> Result<Self> {
        check_k(k, train.n())?;
        if labels.len() != train.n() {
            return Err(Error::DimensionMismatch {
                expected: train.n(),
                actual: labels.len(),
            });
        }
        let mut classes: Vec<String> = labels.iter().map(|s| s.to_string()).collect();
        classes.sort();
        classes.dedup();
        let labels = labels
            .iter()
            .map(|l| classes.iter().position(|c| c == l).expect("label present"))
            .collect();
        Ok(Self {
            k,
            points: Points::from_dataset(train),
            classes,
            labels,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.dim == 0 || !self.points.features.len().is_multiple_of(self.points.dim) {
            return Err(Error::Parse("malformed kNN feature matrix".into()));
        }
        check_k(self.k, self.points.len())?;
        if self.labels.len() != self.points.len() || self.labels.iter().any(|&l| l >= self.classes.len()) {
            return Err(Error::Parse("kNN labels do not match rows or classes".into()));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.points.dim
    }

    pub fn proba_one(&self, x: &[f64]) -> Result<Vec<f64>, BlackBoxError> {
        self.points.check(x)?;
        let mut p = vec![0.0; self.classes.len()];
        let mut den = 0.0;
        for (dist, i) in self.points.nearest(x, self.k) {
            let w = weight(dist);
            p[self.labels[i]] += w;
            den += w;
        }
        p.iter_mut().for_each(|v| *v /= den);
        Ok(p)
    }

    /// Most probable class name (first in class order on ties).
    pub fn predict_label(&self, x: &[f64]) -> Result<&str, BlackBoxError> {
        let p = self.proba_one(x)?;
        let best = (0..p.len()).fold(0, |b, i| if p[i] > p[b] { i } else { b });
        Ok(&self.classes[best])
    }
}

impl Classifier<Instance> for KnnClassifier {
    fn classes(&self) -> &[String] {
        &self.classes
    }

    fn predict_proba(&self, xs: &[Instance]) -> Result<Vec<Vec<f64>>, BlackBoxError> {
        xs.iter().map(|x| self.proba_one(x.values())).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blackbox::ClassProbability;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ds(rows: Vec<Vec<f64>>) -> Dataset {
        Dataset::from_rows(rows).unwrap()
    }

    #[test]
    fn exact_match_with_k1_returns_target() {
        let m = KnnRegressor::fit(&ds(vec![vec![0.0, 0.0], vec![1.0, 1.0]]), &[3.5, -2.0], 1).unwrap();
        assert_eq!(m.predict_one(&[1.0, 1.0]).unwrap(), -2.0);
    }

    #[test]
    fn equidistant_neighbours_average() {
        let m = KnnRegressor::fit(&ds(vec![vec![-1.0], vec![1.0]]), &[0.0, 2.0], 2).unwrap();
        assert_eq!(m.predict_one(&[0.0]).unwrap(), 1.0);
    }

    #[test]
    fn output_is_convex_combination_of_neighbours() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rows: Vec<Vec<f64>> = (0..200).map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
        let targets: Vec<f64> = (0..200).map(|_| rng.random_range(-10.0..10.0)).collect();
        let m = KnnRegressor::fit(&ds(rows), &targets, 5).unwrap();
        for _ in 0..100 {
            let q = [rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5)];
            let nn = m.points.nearest(&q, 5);
            let (lo, hi) = nn.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(_, i)| {
                (lo.min(targets[i]), hi.max(targets[i]))
            });
            let y = m.predict_one(&q).unwrap();
            assert!(y >= lo - 1e-12 && y <= hi + 1e-12);
        }
    }

    #[test]
    fn nearest_matches_full_sort() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let rows: Vec<Vec<f64>> = (0..300).map(|_| vec![rng.random_range(0.0..1.0); 3]).collect();
        let pts = Points::from_dataset(&ds(rows.clone()));
        let q = [0.5, 0.2, 0.9];
        let mut all: Vec<(f64, usize)> = rows
            .iter()
            .enumerate()
            .map(|(i, r)| (r.iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(), i))
            .collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let got: Vec<usize> = pts.nearest(&q, 7).into_iter().map(|(_, i)| i).collect();
        let want: Vec<usize> = all[..7].iter().map(|&(_, i)| i).collect();
        assert_eq!(got, want);
    }

    #[test]
    fn classifier_probabilities_normalised() {
        let rows = vec![vec![0.0], vec![0.1], vec![1.0], vec![1.1]];
        let m = KnnClassifier::fit(&ds(rows), &["b", "b", "a", "a"], 3).unwrap();
        assert_eq!(m.classes(), &["a".to_string(), "b".to_string()]);
        let p = m.proba_one(&[0.4]).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(m.predict_label(&[0.05]).unwrap(), "b");
        let bb = ClassProbability::new(m, "a").unwrap();
        let y = bb.predict_batch(&[Instance::new(vec![1.05]).unwrap()]).unwrap();
        assert!(y[0] > 0.5 && y[0] <= 1.0);
    }

    #[test]
    fn dimension_and_k_checked() {
        let m = KnnRegressor::fit(&ds(vec![vec![0.0, 0.0]]), &[1.0], 1).unwrap();
        assert!(m.predict_one(&[0.0]).is_err());
        assert!(KnnRegressor::fit(&ds(vec![vec![0.0]]), &[1.0], 2).is_err());
    }
}
