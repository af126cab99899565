use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde_json::json;

use super::lime::{lime_baseline_explain, LimeConfig, TrainStats};
use super::report::{ChartPanel, Check, ExperimentReport};
use super::{stream_seed, train_test_split};
use crate::blackbox::{BlackBox, KnnRegressor};
use crate::engine::{explain, EngineConfig};
use crate::error::{Error, Result};
use crate::generators::KdeModel;
use crate::local_models::SurrogateFamily;
use crate::types::{Dataset, Instance, SummaryStatistics, Transform};

/// Arc length of the spiral `(θ cos θ, θ sin θ)` from 0 to `θ`.
pub fn arc_length(theta: f64) -> f64 {
    0.5 * (theta * (1.0 + theta * theta).sqrt() + theta.asinh())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpiralSample {
    pub theta: f64,
    pub x1: f64,
    pub x2: f64,
    pub y: f64,
}

/// Noise-free point at `θ`.
pub fn spiral_point(theta: f64) -> SpiralSample {
    SpiralSample {
        theta,
        x1: theta * theta.cos(),
        x2: theta * theta.sin(),
        y: arc_length(theta),
    }
}

/// Feature rows `(x1, x2)` with noise, targets, and the drawn angles.
#[derive(Clone, Debug)]
pub struct SpiralData {
    pub features: Dataset,
    pub targets: Vec<f64>,
    pub thetas: Vec<f64>,
}

pub fn spiral_generate(n: usize, theta_range: (f64, f64), noise_std: f64, seed: u64) -> Result<SpiralData> {
    let (lo, hi) = theta_range;
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if !(lo >= 0.0 && hi > lo && hi.is_finite()) {
        return Err(Error::InvalidParameter(format!("empty or invalid theta range [{lo}, {hi}]")));
    }
    if !(noise_std >= 0.0) {
        return Err(Error::InvalidParameter(format!("noise std must be >= 0, got {noise_std}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_std).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut rows = Vec::with_capacity(n);
    let mut targets = Vec::with_capacity(n);
    let mut thetas = Vec::with_capacity(n);
    for _ in 0..n {
        let theta = rng.random_range(lo..hi);
        let p = spiral_point(theta);
        rows.push(vec![p.x1 + noise.sample(&mut rng), p.x2 + noise.sample(&mut rng)]);
        targets.push(p.y);
        thetas.push(theta);
    }
    Ok(SpiralData {
        features: Dataset::from_rows_named(rows, vec!["x1".into(), "x2".into()])?,
        targets,
        thetas,
    })
}

#[derive(Clone, Debug)]
pub struct SpiralConfig {
    pub n_points: usize,
    pub theta_range: (f64, f64),
    pub noise_std: f64,
    pub test_fraction: f64,
    pub k: usize,
    pub x_star: [f64; 2],
    /// KDE bandwidth; `None` uses Scott's rule.
    pub bandwidth: Option<f64>,
    pub engine: EngineConfig,
    pub lime_samples: usize,
    /// `None` uses the conventional width heuristic.
    pub lime_kernel_width: Option<f64>,
    pub seed: u64,
}

impl SpiralConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            n_points: 10_000,
            theta_range: (0.0, 4.0 * PI),
            noise_std: 0.1,
            test_fraction: 0.2,
            k: 5,
            x_star: [0.0, 8.0],
            bandwidth: Some(0.25),
            engine: EngineConfig {
                r: 1.0,
                batch_size: 200,
                sigma: 1e-3,
                epsilon_c: 1e-3,
                max_batches: 100,
                seed,
            },
            lime_samples: 5000,
            lime_kernel_width: None,
            seed,
        }
    }
}

/// `|α₂| / (|α₁| + |α₂|)`.
pub fn relative_x2(alpha: &SummaryStatistics) -> f64 {
    let (a1, a2) = (alpha.alpha[0].abs(), alpha.alpha[1].abs());
    if a1 + a2 == 0.0 {
        0.0
    } else {
        a2 / (a1 + a2)
    }
}

pub fn r_squared(truth: &[f64], pred: &[f64]) -> f64 {
    let mean = truth.iter().sum::<f64>() / truth.len() as f64;
    let ss_tot: f64 = truth.iter().map(|t| (t - mean).powi(2)).sum();
    let ss_res: f64 = truth.iter().zip(pred).map(|(t, p)| (t - p).powi(2)).sum();
    1.0 - ss_res / ss_tot
}

pub fn spiral_experiment(config: &SpiralConfig) -> Result<ExperimentReport> {
    let data = spiral_generate(config.n_points, config.theta_range, config.noise_std, stream_seed(config.seed, 0))?;
    let (train_idx, test_idx) = train_test_split(data.features.n(), config.test_fraction, stream_seed(config.seed, 1))?;
    let train = data.features.select(&train_idx)?;
    let test = data.features.select(&test_idx)?;
    let y_train: Vec<f64> = train_idx.iter().map(|&i| data.targets[i]).collect();
    let y_test: Vec<f64> = test_idx.iter().map(|&i| data.targets[i]).collect();

    let model = KnnRegressor::fit(&train, &y_train, config.k)?;
    let test_rows: Vec<Instance> = (0..test.n()).map(|i| test.instance(i)).collect();
    let pred = model
        .predict_batch(&test_rows)
        .map_err(|source| Error::BlackBox { batch: 0, source })?;
    let r2 = r_squared(&y_test, &pred);
    let mse = y_test.iter().zip(&pred).map(|(t, p)| (t - p).powi(2)).sum::<f64>() / y_test.len() as f64;

    let x_star = Instance::with_names(config.x_star.to_vec(), vec!["x1".into(), "x2".into()])?;
    let train = Arc::new(train);
    let kde = KdeModel::fit(train.clone(), config.bandwidth)?;
    let melime = explain(&model, &x_star, &kde, &Transform::Identity, SurrogateFamily::linear(), &config.engine)?;

    let stats = TrainStats::from_dataset(&train);
    let lime_cfg = LimeConfig::new(
        config.lime_kernel_width.unwrap_or_else(|| stats.default_kernel_width()),
        config.lime_samples,
        stream_seed(config.seed, 2),
    );
    let lime = lime_baseline_explain(&model, &x_star, &stats, &lime_cfg)?;

    let a = &melime.importances.alpha;
    let (rel_m, rel_l) = (relative_x2(&melime.importances), relative_x2(&lime.importances));
    let checks = vec![
        Check::new("blackbox_r2", r2 >= 0.99, format!("held-out R2 = {r2:.6} (>= 0.99)")),
        Check::new(
            "melime_x1_dominant",
            a[0] < 0.0 && a[0].abs() >= 2.0 * a[1].abs(),
            format!("alpha = ({:.4}, {:.4}); need alpha1 < 0 and |alpha1| >= 2|alpha2|", a[0], a[1]),
        ),
        Check::new(
            "lime_overweights_x2",
            rel_l >= 2.0 * rel_m,
            format!("relative x2 importance: baseline {rel_l:.4} vs melime {rel_m:.4} (need >= 2x)"),
        ),
    ];

    Ok(ExperimentReport {
        experiment: "spiral".into(),
        seed: config.seed,
        blackbox_metrics: json!({
            "model": "knn_regressor",
            "k": config.k,
            "n_train": train_idx.len(),
            "n_test": test_idx.len(),
            "r2": r2,
            "mse": mse,
        }),
        melime: json!({
            "kde_bandwidth": kde.bandwidth(),
            "explanation": melime.to_json(),
        }),
        lime_baseline: lime.to_json(),
        checks,
        panels: vec![
            ChartPanel {
                title: "melime (kde + linear)".into(),
                importances: melime.importances.clone(),
            },
            ChartPanel {
                title: "baseline".into(),
                importances: lime.importances.clone(),
            },
        ],
    })
}
