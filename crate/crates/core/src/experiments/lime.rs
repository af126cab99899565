use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde_json::{json, Value};

use crate::blackbox::BlackBox;
use crate::error::{Error, Result};
use crate::local_models::{weighted_linear_fit, LocalData, DEFAULT_RIDGE};
use crate::types::{Instance, SummaryStatistics};

/// Per-feature training moments used by the baseline's global sampler.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl TrainStats {
    pub fn from_dataset(data: &crate::Dataset) -> Self {
        let (mean, std) = data.column_stats();
        Self { mean, std }
    }

    /// `0.75 · √d · mean(std)`.
    pub fn default_kernel_width(&self) -> f64 {
        let d = self.std.len() as f64;
        0.75 * d.sqrt() * self.std.iter().sum::<f64>() / d
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LimeConfig {
    pub kernel_width: f64,
    pub n_samples: usize,
    pub lambda: f64,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct LimeExplanation {
    pub importances: SummaryStatistics,
    pub intercept: f64,
    pub prediction: f64,
    pub surrogate_prediction: f64,
    pub fidelity_gap: f64,
    pub config: LimeConfig,
}

impl LimeExplanation {
    pub fn to_json(&self) -> Value {
        json!({
            "importances": self.importances.to_json(),
            "intercept": self.intercept,
            "prediction": self.prediction,
            "surrogate_prediction": self.surrogate_prediction,
            "fidelity_gap": self.fidelity_gap,
            "config": {
                "kernel_width": self.config.kernel_width,
                "n_samples": self.config.n_samples,
                "lambda": self.config.lambda,
            },
            "seed": self.config.seed,
        })
    }
}

/// Baseline in the style of the original perturbation explainer: features
/// drawn independently from `N(μ_j, σ_j)` over the whole training range,
/// weighted by `exp(−‖x − x*‖² / w²)`, and fitted with weighted ridge.
pub fn lime_baseline_explain<F>(
    f: &F,
    x_star: &Instance,
    train: &TrainStats,
    config: &LimeConfig,
) -> Result<LimeExplanation>
where
    F: BlackBox<Instance> + ?Sized,
{
    let d = x_star.dim();
    if train.mean.len() != d || train.std.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: train.mean.len(),
        });
    }
    if config.n_samples < 2 {
        return Err(Error::InvalidParameter("baseline needs at least 2 samples".into()));
    }
    if !(config.kernel_width > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "kernel width must be > 0, got {}",
            config.kernel_width
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let samplers: Vec<Option<Normal<f64>>> = train
        .mean
        .iter()
        .zip(&train.std)
        .map(|(&m, &s)| if s > 0.0 { Normal::new(m, s).ok() } else { None })
        .collect();
    let samples: Vec<Instance> = (0..config.n_samples)
        .map(|_| {
            let v = samplers
                .iter()
                .zip(x_star.values())
                .map(|(s, &x)| s.as_ref().map_or(x, |n| n.sample(&mut rng)))
                .collect();
            Instance::new(v)
        })
        .collect::<Result<_>>()?;
    let prediction = f
        .predict_batch(std::slice::from_ref(x_star))
        .map_err(|source| Error::BlackBox { batch: 0, source })?[0];
    let ys = f
        .predict_batch(&samples)
        .map_err(|source| Error::BlackBox { batch: 1, source })?;

    let w2 = config.kernel_width * config.kernel_width;
    let mut data = LocalData::new(x_star.values().to_vec(), prediction);
    let mut weights = Vec::with_capacity(samples.len());
    for (x, y) in samples.into_iter().zip(ys) {
        let dist2: f64 = x.values().iter().zip(x_star.values()).map(|(a, b)| (a - b).powi(2)).sum();
        weights.push((-dist2 / w2).exp());
        data.push(x.into_values(), y, None);
    }
    let fit = weighted_linear_fit(&data, &weights, config.lambda)?;
    let surrogate_prediction = fit.predict(x_star.values());
    Ok(LimeExplanation {
        importances: SummaryStatistics::new(fit.coefficients.clone(), x_star.feature_names())?,
        intercept: fit.intercept,
        prediction,
        surrogate_prediction,
        fidelity_gap: (surrogate_prediction - prediction).abs(),
        config: config.clone(),
    })
}

impl LimeConfig {
    pub fn new(kernel_width: f64, n_samples: usize, seed: u64) -> Self {
        Self {
            kernel_width,
            n_samples,
            lambda: DEFAULT_RIDGE,
            seed,
        }
    }
}
