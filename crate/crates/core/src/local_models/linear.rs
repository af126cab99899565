use nalgebra::{Cholesky, DMatrix, DVector};
use serde_json::{json, Value};

use super::LocalData;
use crate::error::{Error, Result};

/// Ridge penalty applied when none is requested, and the fallback for
/// singular designs.
pub const DEFAULT_RIDGE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct LinearSurrogate {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    /// Penalty actually used.
    pub lambda: f64,
    /// Set when a singular unpenalised design forced the fallback penalty.
    pub regularized_fallback: bool,
}

impl LinearSurrogate {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept
            + self
                .coefficients
                .iter()
                .zip(x)
                .map(|(b, v)| b * v)
                .sum::<f64>()
    }

    pub fn to_json(&self, names: &[String]) -> Value {
        let coefs: serde_json::Map<_, _> = names
            .iter()
            .cloned()
            .zip(self.coefficients.iter().map(|&c| json!(c)))
            .collect();
        json!({
            "kind": "linear",
            "coefficients": coefs,
            "intercept": self.intercept,
            "lambda": self.lambda,
            "regularized_fallback": self.regularized_fallback,
        })
    }
}

/// Ridge regression `min Σ(y − β·x − β₀)² + λ‖β‖²` (intercept unpenalised).
pub fn linear_fit(data: &LocalData, lambda: f64) -> Result<LinearSurrogate> {
    let weights = vec![1.0; data.len()];
    weighted_linear_fit(data, &weights, lambda)
}

/// Weighted ridge `min Σ wᵢ(yᵢ − β·xᵢ − β₀)² + λ‖β‖²`, solved through the
/// centred normal equations.
///
/// Samples are put in a canonical order before accumulation, so the result is
/// bit-identical under any permutation of the input.
pub fn weighted_linear_fit(data: &LocalData, weights: &[f64], lambda: f64) -> Result<LinearSurrogate> {
    data.validate()?;
    if data.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "linear surrogate needs at least 2 samples, got {}",
            data.len()
        )));
    }
    if weights.len() != data.len() {
        return Err(Error::DimensionMismatch {
            expected: data.len(),
            actual: weights.len(),
        });
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::InvalidParameter("weights must be finite and non-negative".into()));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!("ridge penalty must be >= 0, got {lambda}")));
    }
    let d = data.dim();

    let mut order: Vec<usize> = (0..data.len()).collect();
    order.sort_by(|&a, &b| {
        data.xs[a]
            .iter()
            .zip(&data.xs[b])
            .map(|(p, q)| p.total_cmp(q))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(data.ys[a].total_cmp(&data.ys[b]))
            .then(weights[a].total_cmp(&weights[b]))
    });

    let w_sum: f64 = order.iter().map(|&i| weights[i]).sum();
    if !(w_sum > 0.0) {
        return Err(Error::InvalidParameter("all sample weights are zero".into()));
    }
    let mut x_mean = vec![0.0; d];
    let mut y_mean = 0.0;
    for &i in &order {
        let w = weights[i];
        for (m, v) in x_mean.iter_mut().zip(&data.xs[i]) {
            *m += w * v;
        }
        y_mean += w * data.ys[i];
    }
    x_mean.iter_mut().for_each(|m| *m /= w_sum);
    y_mean /= w_sum;

    let mut gram = DMatrix::<f64>::zeros(d, d);
    let mut rhs = DVector::<f64>::zeros(d);
    let mut centred = vec![0.0; d];
    for &i in &order {
        let w = weights[i];
        for (c, (v, m)) in centred.iter_mut().zip(data.xs[i].iter().zip(&x_mean)) {
            *c = v - m;
        }
        let dy = data.ys[i] - y_mean;
        for a in 0..d {
            let wa = w * centred[a];
            rhs[a] += wa * dy;
            for b in a..d {
                gram[(a, b)] += wa * centred[b];
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            gram[(a, b)] = gram[(b, a)];
        }
    }

    let (beta, used_lambda, fallback) = match solve(&gram, &rhs, lambda) {
        Some(beta) => (beta, lambda, false),
        None => {
            let fallback_lambda = lambda.max(DEFAULT_RIDGE);
            match solve(&gram, &rhs, fallback_lambda) {
                Some(beta) => (beta, fallback_lambda, true),
                // Every feature is constant in the local data.
                None => (DVector::zeros(d), fallback_lambda, true),
            }
        }
    };
    let coefficients: Vec<f64> = beta.iter().copied().collect();
    let intercept = y_mean
        - coefficients
            .iter()
            .zip(&x_mean)
            .map(|(b, m)| b * m)
            .sum::<f64>();
    Ok(LinearSurrogate {
        coefficients,
        intercept,
        lambda: used_lambda,
        regularized_fallback: fallback,
    })
}

/// Cholesky solve of `(G + λI)β = r`; `None` when the system is singular to
/// working precision.
fn solve(gram: &DMatrix<f64>, rhs: &DVector<f64>, lambda: f64) -> Option<DVector<f64>> {
    let d = gram.nrows();
    let mut a = gram.clone();
    for k in 0..d {
        a[(k, k)] += lambda;
    }
    let scale = (0..d).map(|k| a[(k, k)]).fold(0.0f64, f64::max);
    if !(scale > 0.0) {
        return None;
    }
    let chol = Cholesky::new(a)?;
    let l = chol.l_dirty();
    let min_pivot = (0..d).map(|k| l[(k, k)] * l[(k, k)]).fold(f64::INFINITY, f64::min);
    if min_pivot <= scale * 1e-13 {
        return None;
    }
    Some(chol.solve(rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn data_from(f: impl Fn(&[f64]) -> f64, n: usize, d: usize, seed: u64) -> LocalData {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data = LocalData::new(vec![0.0; d], 0.0);
        for _ in 0..n {
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y = f(&x);
            data.push(x, y, None);
        }
        data
    }

    #[test]
    fn exact_linear_recovery() {
        let data = data_from(|x| 3.0 * x[0] - 2.0 * x[1] + 1.0, 50, 2, 1);
        let s = linear_fit(&data, 0.0).unwrap();
        assert!((s.coefficients[0] - 3.0).abs() < 1e-8);
        assert!((s.coefficients[1] + 2.0).abs() < 1e-8);
        assert!((s.intercept - 1.0).abs() < 1e-8);
        assert!(!s.regularized_fallback);
        assert!((s.predict(&[1.0, 1.0]) - (s.intercept + s.coefficients[0] + s.coefficients[1])).abs() < 1e-12);
    }

    #[test]
    fn constant_target_gives_zero_slope() {
        let data = data_from(|_| 4.5, 30, 3, 2);
        let s = linear_fit(&data, 0.0).unwrap();
        assert!(s.coefficients.iter().all(|c| c.abs() < 1e-8));
        assert!((s.intercept - 4.5).abs() < 1e-12);
    }

    #[test]
    fn noisy_slope_within_sampling_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let noise = Normal::new(0.0, 0.1).unwrap();
        let mut data = LocalData::new(vec![0.0], 0.0);
        for _ in 0..1000 {
            let x: f64 = rng.random_range(-1.0..1.0);
            data.push(vec![x], 3.0 * x + noise.sample(&mut rng), None);
        }
        let s = linear_fit(&data, DEFAULT_RIDGE).unwrap();
        assert!((s.coefficients[0] - 3.0).abs() < 0.02);
    }

    #[test]
    fn singular_design_falls_back_to_ridge() {
        // Second column duplicates the first.
        let mut data = LocalData::new(vec![0.0, 0.0], 0.0);
        for i in 0..10 {
            let x = i as f64;
            data.push(vec![x, x], 2.0 * x, None);
        }
        let s = linear_fit(&data, 0.0).unwrap();
        assert!(s.regularized_fallback);
        assert_eq!(s.lambda, DEFAULT_RIDGE);
        assert!((s.coefficients[0] - 1.0).abs() < 1e-6);
        assert!((s.coefficients[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn all_constant_features_give_mean_model() {
        let mut data = LocalData::new(vec![1.0], 0.0);
        data.push(vec![1.0], 1.0, None);
        data.push(vec![1.0], 3.0, None);
        let s = linear_fit(&data, 0.0).unwrap();
        assert_eq!(s.coefficients, vec![0.0]);
        assert_eq!(s.intercept, 2.0);
    }

    #[test]
    fn needs_two_samples() {
        let mut data = LocalData::new(vec![0.0], 0.0);
        data.push(vec![1.0], 1.0, None);
        assert!(linear_fit(&data, 0.0).is_err());
    }

    #[test]
    fn infinite_width_weights_match_unweighted() {
        let data = data_from(|x| x[0].sin() + x[1] * x[1], 200, 2, 4);
        let plain = linear_fit(&data, 1e-3).unwrap();
        let weighted = weighted_linear_fit(&data, &vec![1.0; 200], 1e-3).unwrap();
        assert_eq!(plain, weighted);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]
            #[test]
            fn permutation_invariant(seed in 0u64..1000, swaps in proptest::collection::vec((0usize..60, 0usize..60), 1..40)) {
                let data = data_from(|x| x[0] * x[1] + 0.3 * x[2], 60, 3, seed);
                let mut shuffled = data.clone();
                for (a, b) in swaps {
                    shuffled.xs.swap(a, b);
                    shuffled.ys.swap(a, b);
                }
                prop_assert_eq!(linear_fit(&data, 1e-6).unwrap(), linear_fit(&shuffled, 1e-6).unwrap());
            }
        }
    }
}
